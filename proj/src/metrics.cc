// Copyright 2026 The tinydet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinydet/metrics.h"

#include <algorithm>
#include <cmath>
#include <utility>

namespace tinydet {
namespace {

void check_scale(Real c, const char* who) {
  if (!(c > 0) || !std::isfinite(c)) {
    throw ConfigError(std::string(who) + ": C must be a positive finite value");
  }
}

// Indices of dets ordered by descending score, ties by input order.
std::vector<std::size_t> score_order(std::span<const Detection> dets,
                                     std::span<const std::size_t> subset) {
  std::vector<std::size_t> order(subset.begin(), subset.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });
  return order;
}

Real similarity_of(Similarity s, const Box& det, const Box& gt, Real c) {
  if (s == Similarity::kIou) return iou(det, gt);
  return safit(det, gt, c, gt.area());
}

constexpr int kThresholds = 10;

Real threshold_at(int i) { return Real(0.5) + Real(0.05) * i; }

}  // namespace

Real nwd(const Box& a, const Box& b, Real c) {
  check_scale(c, "nwd");
  const Real dx = a.center_x() - b.center_x();
  const Real dy = a.center_y() - b.center_y();
  const Real dw = (a.width() - b.width()) / 2;
  const Real dh = (a.height() - b.height()) / 2;
  const Real w2 = dx * dx + dy * dy + dw * dw + dh * dh;
  return std::exp(-std::sqrt(w2) / c);
}

Real safit(const Box& det, const Box& gt, Real c, Real gt_area) {
  check_scale(c, "safit");
  if (gt_area < 0) throw ConfigError("safit: negative ground-truth area");
  const Real w = Real(1) / (Real(1) + std::exp(-(std::sqrt(gt_area) / c - 1)));
  return w * iou(det, gt) + (Real(1) - w) * nwd(det, gt, c);
}

const char* similarity_name(Similarity s) {
  return s == Similarity::kIou ? "iou" : "safit";
}

MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             Similarity similarity, Real threshold, Real c) {
  if (!(threshold > 0 && threshold <= 1)) {
    throw ConfigError("match_detections: threshold must lie in (0, 1]");
  }
  if (similarity == Similarity::kSafit) check_scale(c, "match_detections");

  MatchResult result;
  result.true_positive.assign(dets.size(), false);
  result.matched_gt.assign(dets.size(), -1);
  result.gt_matched.assign(gts.size(), false);

  std::map<std::pair<int, int>, std::vector<std::size_t>> det_groups, gt_groups;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    det_groups[{dets[i].image_id, dets[i].class_id}].push_back(i);
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    gt_groups[{gts[j].image_id, gts[j].class_id}].push_back(j);
  }

  for (const auto& [key, members] : det_groups) {
    const auto it = gt_groups.find(key);
    if (it == gt_groups.end()) continue;
    const std::vector<std::size_t>& candidates = it->second;
    for (std::size_t d : score_order(dets, members)) {
      int best = -1;
      Real best_sim = threshold;
      for (std::size_t g : candidates) {
        if (result.gt_matched[g]) continue;
        const Real sim = similarity_of(similarity, dets[d].box, gts[g].box, c);
        // Strict comparison keeps the lower index on ties.
        if (sim >= best_sim && (best < 0 || sim > best_sim)) {
          best = static_cast<int>(g);
          best_sim = sim;
        }
      }
      if (best >= 0) {
        result.true_positive[d] = true;
        result.matched_gt[d] = best;
        result.gt_matched[best] = true;
      }
    }
  }
  return result;
}

Real average_precision(const std::vector<bool>& sorted_tp, int num_gt) {
  if (num_gt <= 0) return Real(0);
  const std::size_t n = sorted_tp.size();
  std::vector<Real> recall(n), precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted_tp[i]) ++tp;
    recall[i] = static_cast<Real>(tp) / num_gt;
    precision[i] = static_cast<Real>(tp) / static_cast<Real>(i + 1);
  }
  // Precision envelope: max precision at any later rank.
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  Real sum = 0;
  std::size_t rank = 0;
  for (int r = 0; r <= 100; ++r) {
    const Real level = static_cast<Real>(r) / 100;
    while (rank < n && recall[rank] < level) ++rank;
    if (rank < n) sum += precision[rank];
  }
  return sum / 101;
}

Real average_object_size(std::span<const GroundTruth> gts) {
  if (gts.empty()) return Real(0);
  Real sum = 0;
  for (const GroundTruth& g : gts) {
    sum += std::sqrt(std::max(Real(0), g.box.area()));
  }
  return sum / static_cast<Real>(gts.size());
}

std::map<int, Real> ap_at_threshold(std::span<const Detection> dets,
                                    std::span<const GroundTruth> gts,
                                    Similarity similarity, Real threshold,
                                    Real c) {
  const MatchResult match =
      match_detections(dets, gts, similarity, threshold, c);
  std::map<int, int> gt_count;
  for (const GroundTruth& g : gts) ++gt_count[g.class_id];
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    by_class[dets[i].class_id].push_back(i);
  }
  std::map<int, Real> out;
  for (const auto& [cls, count] : gt_count) {
    std::vector<bool> tp;
    const auto it = by_class.find(cls);
    if (it != by_class.end()) {
      for (std::size_t d : score_order(dets, it->second)) {
        tp.push_back(match.true_positive[d]);
      }
    }
    out[cls] = average_precision(tp, count);
  }
  return out;
}

EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruth> gts,
                    const EvalConfig& config) {
  for (const Detection& d : dets) {
    if (!std::isfinite(d.score)) throw ConfigError("evaluate: non-finite score");
  }
  EvalReport report;
  report.num_gt = static_cast<int>(gts.size());
  report.num_detections = static_cast<int>(dets.size());
  report.c = config.c > 0 ? config.c : average_object_size(gts);
  if (gts.empty() && !(report.c > 0)) report.c = Real(1);  // nothing to scale

  std::vector<Similarity> protocols;
  if (config.iou) protocols.push_back(Similarity::kIou);
  if (config.safit) {
    check_scale(report.c, "evaluate");
    protocols.push_back(Similarity::kSafit);
  }

  for (Similarity s : protocols) {
    ProtocolReport pr;
    for (int t = 0; t < kThresholds; ++t) {
      const Real thr = threshold_at(t);
      for (const auto& [cls, ap] : ap_at_threshold(dets, gts, s, thr, report.c)) {
        ProtocolReport::ClassAp& entry = pr.per_class[cls];
        entry.ap += ap / kThresholds;
        if (t == 0) entry.ap50 = ap;
        if (t == 5) entry.ap75 = ap;
      }
    }
    if (!pr.per_class.empty()) {
      const Real n = static_cast<Real>(pr.per_class.size());
      for (const auto& [cls, entry] : pr.per_class) {
        pr.mean.ap += entry.ap / n;
        pr.mean.ap50 += entry.ap50 / n;
        pr.mean.ap75 += entry.ap75 / n;
      }
    }
    report.protocols[similarity_name(s)] = std::move(pr);
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["C"] = c;
  j["num_gt"] = num_gt;
  j["num_detections"] = num_detections;
  for (const auto& [name, pr] : protocols) {
    nlohmann::json p;
    p["AP"] = pr.mean.ap;
    p["AP50"] = pr.mean.ap50;
    p["AP75"] = pr.mean.ap75;
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [cls, e] : pr.per_class) {
      classes[std::to_string(cls)] = {
          {"AP", e.ap}, {"AP50", e.ap50}, {"AP75", e.ap75}};
    }
    p["per_class"] = std::move(classes);
    j[name] = std::move(p);
  }
  return j;
}

}  // namespace tinydet
