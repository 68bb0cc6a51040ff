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

// Desk-scale detector:
//
//   stem (/2) -> [k4s2, k4s2] -> P3 (/8) -> [k4s2, 3x3] -> P4 (/16)
//   -> [k4s2, 3x3] -> P5 (/32) -> SPPF with optional GRM before or after
//   -> optional CSHA(P3, P4, P5) -> top-down merge -> head at stride 16.
//
// Head channels per cell: objectness logit, tx, ty, tw, th with
//   cx = (j + sigmoid(tx)) * s, cy = (i + sigmoid(ty)) * s,
//   w = exp(tw) * s,           h = exp(th) * s.

#ifndef TINYDET_DETECTOR_H_
#define TINYDET_DETECTOR_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tinydet/boxes.h"
#include "tinydet/csha.h"
#include "tinydet/grm.h"
#include "tinydet/metrics.h"
#include "tinydet/rhwd.h"
#include "tinydet/sppf.h"

namespace tinydet {

enum class GrmVariant { kNone, kPlainMhsa, kGrm };
enum class GrmPosition { kBeforeSppf, kAfterSppf };
enum class LossVariant { kIouOnly, kIouPlusCenter };

struct DetectorConfig {
  StemVariant stem = StemVariant::kRhwd;
  GrmVariant grm = GrmVariant::kGrm;
  GrmPosition grm_position = GrmPosition::kAfterSppf;
  bool csha = true;
  LossVariant loss = LossVariant::kIouPlusCenter;
  std::array<int, 4> widths{8, 16, 32, 32};  // stem, P3, P4, P5
  Real alpha1 = Real(0.5);
  Real alpha2 = Real(0.5);
  Real c = 0;  // <= 0: mean sqrt(w*h) of the training boxes
  int image_size = 64;
  int heads = 8;
  int points = 4;

  void validate() const;
  // alpha1 is forced to 0 for iou_only.
  RegLossConfig reg_loss(Real resolved_c) const;

  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

// Named configurations. The ablation ladder adds one component per row.
DetectorConfig detector_preset(std::string_view name);
std::vector<std::string> detector_preset_names();
std::vector<std::string> ablation_ladder();

inline constexpr int kHeadStride = 16;
inline constexpr int kHeadChannels = 5;
inline constexpr Real kLogSizeMin = Real(-8);
inline constexpr Real kLogSizeMax = Real(4);

struct Detector {
  DetectorConfig config;
  StemWeights stem;
  ConvUnit stage3a, stage3b;  // stride 2 -> 4 -> 8
  ConvUnit stage4a, stage4b;  // -> 16
  ConvUnit stage5a, stage5b;  // -> 32
  SppfWeights sppf;
  GrmWeights grm;
  CshaWeights csha;
  ConvUnit lateral5, lateral3;  // 1x1 to the P4 width
  ConvUnit downsample;          // merged P3 back to stride 16
  ConvUnit head_hidden, head_out;

  ParamSlots slots();
};

Detector build_detector(const DetectorConfig& config, std::uint64_t seed);

struct DetectorCache {
  StemCache stem;
  ConvUnitCache stage3a, stage3b, stage4a, stage4b, stage5a, stage5b;
  SppfCache sppf;
  GrmCache grm;
  CshaCache csha;
  ConvUnitCache lateral5, lateral3, downsample, head_hidden, head_out;
};

// images: (b, 3, S, S). Returns the head map (b, 5, S/16, S/16).
FeatureMap detector_forward(const FeatureMap& images, Detector& model,
                            Mode mode, DetectorCache* cache = nullptr);

// Accumulates parameter gradients; returns the image gradient.
FeatureMap detector_backward(const FeatureMap& grad_head,
                             const DetectorCache& cache, Detector& model);

// Zero box-branch weights: every cell predicts a box of the given size at
// its own center until training moves it.
void center_box_init(Detector& model, Real box_size);

struct Targets {
  int batch = 0;
  int height = 0;
  int width = 0;
  int stride = kHeadStride;
  std::vector<char> positive;  // (b, i, j)
  std::vector<Box> boxes;

  std::size_t index(int b, int i, int j) const {
    return (static_cast<std::size_t>(b) * height + i) * width + j;
  }
  int positives() const;
};

// One cell per GT: the cell holding its center. Collisions keep the larger
// box (the earlier one on equal area).
Targets assign_targets(const std::vector<std::vector<GroundTruth>>& gts,
                       int height, int width, int stride = kHeadStride);

Box decode_cell(const FeatureMap& head, int b, int i, int j,
                int stride = kHeadStride);

struct LossBreakdown {
  Real total = 0;
  Real objectness = 0;
  Real regression = 0;
  int positives = 0;
};

// BCE on objectness averaged over cells plus the regression loss averaged
// over positive cells. Writes dL/dhead when grad_head is given.
LossBreakdown detection_loss(const FeatureMap& head, const Targets& targets,
                             const RegLossConfig& reg,
                             FeatureMap* grad_head = nullptr);

// Greedy NMS; drops boxes overlapping a higher-scored kept box by more than
// iou_threshold. Input order breaks score ties.
std::vector<Detection> nms(std::vector<Detection> dets, Real iou_threshold);

// Decodes every cell scoring at least score_threshold, then NMS per image.
// Batch element b gets image id first_image_id + b.
std::vector<Detection> decode_detections(const FeatureMap& head,
                                         Real score_threshold,
                                         Real nms_threshold,
                                         int first_image_id = 1,
                                         int stride = kHeadStride);

std::vector<Detection> predict_and_decode(Detector& model,
                                          const FeatureMap& images,
                                          Real score_threshold,
                                          Real nms_threshold,
                                          int first_image_id = 1);

}  // namespace tinydet

#endif  // TINYDET_DETECTOR_H_
