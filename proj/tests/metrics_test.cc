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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "test_util.h"
#include "tinydet/coco_io.h"
#include "tinydet/metrics.h"

namespace tinydet {
namespace {

const std::filesystem::path kData = TINYDET_TEST_DATA;

TEST_CASE("nwd closed forms") {
  const Box a = Box::from_center(0, 0, 4, 4);
  CHECK(nwd(a, a, 2) == 1);
  CHECK(std::abs(nwd(a, Box::from_center(3, 0, 4, 4), 3) - std::exp(-1.0)) < 1e-15);
  const Box wide = Box::from_center(5, 5, 4, 2);
  const Box narrow = Box::from_center(5, 5, 2, 2);
  CHECK(std::abs(nwd(wide, narrow, 1) - std::exp(-1.0)) < 1e-15);
  CHECK_THROWS_AS(nwd(a, a, 0), ConfigError);
}

TEST_CASE("nwd symmetry and identity on random pairs") {
  Rng rng(51);
  for (int i = 0; i < 100; ++i) {
    const Box a = testing::random_box(rng), b = testing::random_box(rng);
    const Real c = testing::uniform(rng, 0.5, 20);
    const Real v = nwd(a, b, c);
    CHECK(v == nwd(b, a, c));
    CHECK(v > 0);
    CHECK(v <= 1);
    CHECK(nwd(a, a, c) == 1);
  }
}

TEST_CASE("safit weight is one half when sqrt(area) equals C") {
  Rng rng(52);
  for (int i = 0; i < 100; ++i) {
    const Box det = testing::random_box(rng, 32), gt = testing::random_box(rng, 32);
    const Real c = std::sqrt(gt.area());
    const Real want = (iou(det, gt) + nwd(det, gt, c)) / 2;
    CHECK(std::abs(safit(det, gt, c, gt.area()) - want) <= 1e-12);
  }
}

TEST_CASE("safit leans on iou for large objects and nwd for small") {
  const Box gt = Box::from_center(10, 10, 2, 2);
  const Box det = Box::from_center(13, 10, 2, 2);  // disjoint
  CHECK(iou(det, gt) == 0);
  // sqrt(4) / 4 - 1 = -0.5, so the weight on IoU is sigmoid(-0.5).
  const Real w = 1 / (1 + std::exp(0.5));
  CHECK(std::abs(safit(det, gt, 4, gt.area()) - (1 - w) * std::exp(-0.75)) < 1e-15);
  const Box big = Box::from_center(100, 100, 64, 64);
  const Box shifted = Box::from_center(103, 100, 64, 64);
  CHECK(std::abs(safit(shifted, big, 4, big.area()) - iou(shifted, big)) < 1e-6);
}

TEST_CASE("safit is invariant under joint scaling") {
  Rng rng(53);
  for (int i = 0; i < 100; ++i) {
    const Box det = testing::random_box(rng), gt = testing::random_box(rng);
    const Real c = testing::uniform(rng, 1, 16);
    const Real k = testing::uniform(rng, 0.25, 8);
    const Box ds{det.x_min * k, det.y_min * k, det.x_max * k, det.y_max * k};
    const Box gs{gt.x_min * k, gt.y_min * k, gt.x_max * k, gt.y_max * k};
    CHECK(std::abs(safit(ds, gs, c * k, gs.area()) - safit(det, gt, c, gt.area())) <=
          1e-12);
  }
}

TEST_CASE("average precision worked example") {
  // Two GTs; ranked TP, FP, TP. Recall 1/2 at precision 1, then 1 at 2/3.
  CHECK(std::abs(average_precision({true, false, true}, 2) - 0.83498) < 1e-5);
  CHECK(std::abs(average_precision({true, false, true}, 2) -
                 (51 + 50 * 2.0 / 3) / 101) < 1e-15);
  CHECK(average_precision({true, true}, 2) == 1);
  CHECK(average_precision({}, 2) == 0);
  CHECK(average_precision({false, false}, 2) == 0);
  CHECK(average_precision({true}, 0) == 0);
  // One of two found: recall levels 0..0.5 at precision 1.
  CHECK(std::abs(average_precision({true}, 2) - 51.0 / 101) < 1e-15);
}

TEST_CASE("evaluated 2-GT/3-detection case") {
  const std::vector<GroundTruth> gts{{Box::from_xywh(0, 0, 10, 10), 1, 1},
                                     {Box::from_xywh(30, 30, 10, 10), 1, 1}};
  const std::vector<Detection> dets{{Box::from_xywh(0, 0, 10, 10), 0.9, 1, 1},
                                    {Box::from_xywh(50, 0, 10, 10), 0.8, 1, 1},
                                    {Box::from_xywh(31, 30, 10, 10), 0.7, 1, 1}};
  const auto ap = ap_at_threshold(dets, gts, Similarity::kIou, 0.5, 0);
  CHECK(std::abs(ap.at(1) - 0.83498) < 1e-5);
}

// Independent greedy matcher over an explicit similarity matrix.
std::vector<int> matrix_greedy(const std::vector<std::vector<Real>>& sim,
                               const std::vector<Real>& scores, Real thr) {
  const int nd = static_cast<int>(sim.size());
  const int ng = nd ? static_cast<int>(sim[0].size()) : 0;
  std::vector<int> order(nd);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> match(nd, -1);
  std::vector<bool> used(ng, false);
  for (int d : order) {
    int best = -1;
    for (int g = 0; g < ng; ++g) {
      if (used[g] || sim[d][g] < thr) continue;
      if (best < 0 || sim[d][g] > sim[d][best]) best = g;
    }
    if (best >= 0) {
      match[d] = best;
      used[best] = true;
    }
  }
  return match;
}

TEST_CASE("matching agrees with an exhaustive check over score orders") {
  const std::vector<GroundTruth> gts{{Box::from_xywh(0, 0, 8, 8), 1, 1},
                                     {Box::from_xywh(4, 0, 8, 8), 1, 1}};
  const std::vector<Box> boxes{Box::from_xywh(1, 0, 8, 8), Box::from_xywh(3, 0, 8, 8),
                               Box::from_xywh(2, 1, 8, 8)};
  std::vector<std::vector<Real>> sim(3, std::vector<Real>(2));
  for (int d = 0; d < 3; ++d)
    for (int g = 0; g < 2; ++g) sim[d][g] = iou(boxes[d], gts[g].box);
  std::vector<int> perm{0, 1, 2};
  int orders = 0;
  do {
    std::vector<Detection> dets;
    std::vector<Real> scores(3);
    for (int d = 0; d < 3; ++d) {
      scores[d] = 0.9 - 0.1 * perm[d];
      dets.push_back({boxes[d], scores[d], 1, 1});
    }
    for (Real thr : {0.3, 0.5, 0.7}) {
      const MatchResult got = match_detections(dets, gts, Similarity::kIou, thr, 0);
      CHECK(got.matched_gt == matrix_greedy(sim, scores, thr));
    }
    ++orders;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(orders == 6);
}

TEST_CASE("matching respects image and class and breaks ties") {
  const Box b = Box::from_xywh(0, 0, 4, 4);
  const std::vector<GroundTruth> gts{{b, 1, 1}, {b, 1, 1}, {b, 2, 1}, {b, 1, 2}};
  const std::vector<Detection> dets{{b, 0.5, 1, 1}, {b, 0.5, 1, 1},
                                    {b, 0.5, 1, 1}, {b, 0.9, 3, 1}};
  const MatchResult m = match_detections(dets, gts, Similarity::kIou, 0.5, 0);
  CHECK(m.matched_gt == std::vector<int>{0, 1, -1, -1});
  CHECK(m.gt_matched == std::vector<bool>{true, true, false, false});
  CHECK_THROWS_AS(match_detections(dets, gts, Similarity::kIou, 0, 0), ConfigError);
  CHECK_THROWS_AS(match_detections(dets, gts, Similarity::kIou, 1.5, 0), ConfigError);
}

TEST_CASE("turning a true positive into a false positive never raises AP") {
  Rng rng(54);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 12);
    std::vector<bool> tp(n);
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += (tp[i] = rng() % 2);
    const int num_gt = hits + static_cast<int>(rng() % 3);
    if (num_gt == 0) continue;
    const Real base = average_precision(tp, num_gt);
    for (int i = 0; i < n; ++i) {
      if (!tp[i]) continue;
      std::vector<bool> worse = tp;
      worse[i] = false;
      CHECK(average_precision(worse, num_gt) <= base);
    }
  }
}

// Noisy copies of random GTs plus clutter.
void random_case(Rng& rng, std::vector<GroundTruth>& gts,
                 std::vector<Detection>& dets) {
  gts.clear();
  dets.clear();
  for (int img = 1; img <= 4; ++img) {
    for (int k = 0; k < 4; ++k) {
      const Box b = testing::random_box(rng, 64, 3, 12);
      gts.push_back({b, 1 + k % 2, img});
      const Real j = testing::uniform(rng, 0, 3);
      dets.push_back({Box::from_xywh(b.x_min + testing::uniform(rng, -j, j),
                                     b.y_min + testing::uniform(rng, -j, j),
                                     b.width(), b.height()),
                      testing::uniform(rng, 0, 1), 1 + k % 2, img});
    }
    dets.push_back({testing::random_box(rng), testing::uniform(rng, 0, 1), 1, img});
  }
}

TEST_CASE("stricter thresholds never raise AP") {
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<GroundTruth> gts;
    std::vector<Detection> dets;
    random_case(rng, gts, dets);
    const Real c = average_object_size(gts);
    for (Similarity s : {Similarity::kIou, Similarity::kSafit}) {
      Real prev = 2;
      for (Real thr : {0.5, 0.75, 0.9}) {
        Real mean = 0;
        for (const auto& [cls, ap] : ap_at_threshold(dets, gts, s, thr, c)) mean += ap / 2;
        CHECK(mean <= prev);
        prev = mean;
      }
    }
  }
}

TEST_CASE("empty and perfect detections") {
  Rng rng(56);
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
  random_case(rng, gts, dets);
  const EvalReport none = evaluate({}, gts, {});
  CHECK(none.protocols.at("iou").mean.ap == 0);
  CHECK(none.protocols.at("safit").mean.ap50 == 0);
  std::vector<Detection> perfect;
  for (const GroundTruth& g : gts) perfect.push_back({g.box, 0.9, g.class_id, g.image_id});
  const EvalReport all = evaluate(perfect, gts, {});
  for (const char* p : {"iou", "safit"}) {
    CHECK(all.protocols.at(p).mean.ap == doctest::Approx(1).epsilon(1e-12));
    CHECK(all.protocols.at(p).per_class.size() == 2);
  }
  const EvalReport nothing = evaluate({}, {}, {});
  CHECK(nothing.c == 1);
  CHECK(nothing.protocols.at("iou").per_class.empty());
}

TEST_CASE("automatic C is the mean square-root area") {
  const std::vector<GroundTruth> gts{{Box::from_xywh(0, 0, 4, 4), 1, 1},
                                     {Box::from_xywh(0, 0, 2, 8), 1, 1},
                                     {Box::from_xywh(0, 0, 9, 1), 1, 2}};
  CHECK(average_object_size(gts) == doctest::Approx(11.0 / 3));
  EvalConfig cfg;
  CHECK(evaluate({}, gts, cfg).c == doctest::Approx(11.0 / 3));
  cfg.c = 2.5;
  CHECK(evaluate({}, gts, cfg).c == 2.5);
}

TEST_CASE("golden fixture matches the reference evaluator") {
  const GroundTruthSet gt = ground_truth_from_json(read_json_file(kData / "golden_gt.json"));
  const std::vector<Detection> dets =
      detections_from_json(read_json_file(kData / "golden_dets.json"));
  const nlohmann::json want = read_json_file(kData / "golden_report.json");
  const nlohmann::json got = evaluate(dets, gt.annotations, {}).to_json();
  CHECK(got["num_gt"] == want["num_gt"]);
  CHECK(got["num_detections"] == want["num_detections"]);
  CHECK(std::abs(got["C"].get<double>() - want["C"].get<double>()) < 1e-6);
  for (const char* p : {"iou", "safit"}) {
    for (const char* k : {"AP", "AP50", "AP75"}) {
      CHECK(std::abs(got[p][k].get<double>() - want[p][k].get<double>()) < 1e-6);
      for (const auto& [cls, v] : want[p]["per_class"].items()) {
        CHECK(std::abs(got[p]["per_class"][cls][k].get<double>() - v[k].get<double>()) <
              1e-6);
      }
    }
  }
}

TEST_CASE("coco json round-trip") {
  const GroundTruthSet gt = ground_truth_from_json(read_json_file(kData / "golden_gt.json"));
  CHECK(gt.images.size() == 3);
  CHECK(gt.annotations.size() == 10);
  CHECK(gt.categories.size() == 2);
  const GroundTruthSet back = ground_truth_from_json(ground_truth_to_json(gt));
  REQUIRE(back.annotations.size() == gt.annotations.size());
  for (std::size_t i = 0; i < gt.annotations.size(); ++i) {
    CHECK(back.annotations[i].box == gt.annotations[i].box);
    CHECK(back.annotations[i].class_id == gt.annotations[i].class_id);
    CHECK(back.annotations[i].image_id == gt.annotations[i].image_id);
  }
  CHECK(back.images[2].file_name == gt.images[2].file_name);
  const std::vector<Detection> dets =
      detections_from_json(read_json_file(kData / "golden_dets.json"));
  const std::vector<Detection> dets2 = detections_from_json(detections_to_json(dets));
  REQUIRE(dets2.size() == dets.size());
  CHECK(dets2[3].box == dets[3].box);
  CHECK(dets2[3].score == dets[3].score);
  CHECK_THROWS_AS(detections_from_json(nlohmann::json{{"bbox", 1}}), FormatError);
  CHECK_THROWS_AS(ground_truth_from_json(nlohmann::json::array()), FormatError);
}

}  // namespace
}  // namespace tinydet
