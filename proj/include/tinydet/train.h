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

#ifndef TINYDET_TRAIN_H_
#define TINYDET_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "tinydet/detector.h"
#include "tinydet/scene.h"

namespace tinydet {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 12;
  int steps = 0;  // > 0 overrides epochs * ceil(images / batch_size)
  int batch_size = 8;
  Real lr = Real(0.01);
  Real weight_decay = Real(5e-4);
  std::uint64_t seed = 0;
  int eval_images = 16;  // per-epoch AP50 on the first N images; 0 disables
  Real score_threshold = Real(0.05);
  Real nms_threshold = Real(0.5);

  void validate() const;
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  Real total = 0;
  Real objectness = 0;
  Real regression = 0;
};

struct EpochRecord {
  int epoch = 0;
  Real ap50_iou = 0;
  Real ap50_safit = 0;
};

struct TrainHistory {
  Real c = 0;  // resolved regression and SAFit scale
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_clock_seconds = 0;

  nlohmann::json to_json(bool include_wall_clock = true) const;
};

// Exponential moving average of the total loss, seeded with the first value.
std::vector<Real> smoothed_losses(const TrainHistory& history,
                                  Real beta = Real(0.9));

using StepCallback = std::function<void(const StepRecord&)>;

// Throws NumericalError on a non-finite loss or gradient.
TrainHistory train(Detector& model, const std::vector<Scene>& dataset,
                   const TrainConfig& config, const StepCallback& on_step = {});

// Mean distance between each GT center and the center decoded at the cell it
// is assigned to.
Real mean_center_error(Detector& model, const std::vector<Scene>& dataset);

// Flat little-endian float64 blob plus a JSON manifest of names and shapes.
void save_weights(const std::filesystem::path& blob,
                  const std::filesystem::path& manifest,
                  const ParamSlots& slots);
void load_weights(const std::filesystem::path& blob,
                  const std::filesystem::path& manifest,
                  const ParamSlots& slots);

}  // namespace tinydet

#endif  // TINYDET_TRAIN_H_
