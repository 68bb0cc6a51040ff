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

#ifndef TINYDET_METRICS_H_
#define TINYDET_METRICS_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinydet/boxes.h"

namespace tinydet {

struct Detection {
  Box box;
  Real score = 0;
  int class_id = 0;
  int image_id = 0;
};

struct GroundTruth {
  Box box;
  int class_id = 0;
  int image_id = 0;
};

// Boxes as 2D Gaussians with std (w/2, h/2); exp(-W / c), W the
// 2-Wasserstein distance between them.
Real nwd(const Box& a, const Box& b, Real c);

// Sigmoid blend of IoU and NWD weighted by sqrt(gt_area) / c.
Real safit(const Box& det, const Box& gt, Real c, Real gt_area);

enum class Similarity { kIou, kSafit };

const char* similarity_name(Similarity s);

struct MatchResult {
  std::vector<bool> true_positive;  // per detection, input order
  std::vector<int> matched_gt;      // per detection, -1 if none
  std::vector<bool> gt_matched;     // per ground truth, input order
};

// Greedy one-to-one matching within each (image, class). Detections are
// visited by descending score (ties by input order) and claim the unmatched
// GT of highest similarity >= threshold, ties to the lower GT index.
// c is the SAFit scale; ignored for IoU.
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             Similarity similarity, Real threshold, Real c);

// 101-point interpolated AP from TP flags already sorted by descending score.
Real average_precision(const std::vector<bool>& sorted_tp, int num_gt);

struct EvalConfig {
  Real c = 0;  // <= 0 means mean sqrt(w*h) over the GT boxes
  bool iou = true;
  bool safit = true;
};

struct ProtocolReport {
  struct ClassAp {
    Real ap = 0;
    Real ap50 = 0;
    Real ap75 = 0;
  };
  std::map<int, ClassAp> per_class;  // classes with at least one GT
  ClassAp mean;
};

struct EvalReport {
  Real c = 0;
  int num_gt = 0;
  int num_detections = 0;
  std::map<std::string, ProtocolReport> protocols;  // "iou", "safit"

  nlohmann::json to_json() const;
};

// Mean sqrt(w*h) over all boxes; 0 for an empty list.
Real average_object_size(std::span<const GroundTruth> gts);

// AP for one similarity at one threshold, per class with GT.
std::map<int, Real> ap_at_threshold(std::span<const Detection> dets,
                                    std::span<const GroundTruth> gts,
                                    Similarity similarity, Real threshold,
                                    Real c);

EvalReport evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruth> gts, const EvalConfig& config);

}  // namespace tinydet

#endif  // TINYDET_METRICS_H_
