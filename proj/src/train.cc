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

#include "tinydet/train.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "tinydet/coco_io.h"

namespace tinydet {
namespace {

std::vector<std::vector<GroundTruth>> batch_gts(
    const std::vector<const Scene*>& scenes) {
  std::vector<std::vector<GroundTruth>> out;
  for (const Scene* s : scenes) out.push_back(s->objects);
  return out;
}

bool finite_grads(const ParamSlots& slots) {
  for (const ParamSlot& s : slots) {
    for (Real g : s.grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

EpochRecord evaluate_subset(Detector& model, const std::vector<Scene>& data,
                            int count, Real c, const TrainConfig& cfg) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (int i = 0; i < count; ++i) {
    const std::vector<const Scene*> one{&data[i]};
    for (const Detection& d :
         predict_and_decode(model, stack_images(one), cfg.score_threshold,
                            cfg.nms_threshold, i + 1)) {
      dets.push_back(d);
    }
    for (GroundTruth g : data[i].objects) {
      g.image_id = i + 1;
      gts.push_back(g);
    }
  }
  EpochRecord r;
  r.ap50_iou = ap_at_threshold(dets, gts, Similarity::kIou, Real(0.5), c)[1];
  r.ap50_safit = ap_at_threshold(dets, gts, Similarity::kSafit, Real(0.5), c)[1];
  return r;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0 || steps < 0 || (epochs == 0 && steps == 0)) {
    throw ConfigError("training needs a positive epoch or step count");
  }
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (lr < 0 || weight_decay < 0) {
    throw ConfigError("learning rate and weight decay must be non-negative");
  }
  if (eval_images < 0) throw ConfigError("eval_images must be non-negative");
}

nlohmann::json TrainHistory::to_json(bool include_wall_clock) const {
  nlohmann::json j;
  j["C"] = c;
  nlohmann::json steps_json = nlohmann::json::array();
  for (const StepRecord& s : steps) {
    steps_json.push_back({{"step", s.step},
                          {"epoch", s.epoch},
                          {"total", s.total},
                          {"objectness", s.objectness},
                          {"regression", s.regression}});
  }
  j["steps"] = std::move(steps_json);
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const EpochRecord& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"ap50_iou", e.ap50_iou},
                           {"ap50_safit", e.ap50_safit}});
  }
  j["epochs"] = std::move(epochs_json);
  if (include_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

std::vector<Real> smoothed_losses(const TrainHistory& history, Real beta) {
  std::vector<Real> out;
  out.reserve(history.steps.size());
  Real ema = 0;
  for (std::size_t i = 0; i < history.steps.size(); ++i) {
    const Real v = history.steps[i].total;
    ema = i == 0 ? v : beta * ema + (1 - beta) * v;
    out.push_back(ema);
  }
  return out;
}

TrainHistory train(Detector& model, const std::vector<Scene>& dataset,
                   const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training set is empty");
  const auto start = std::chrono::steady_clock::now();

  std::vector<GroundTruth> all_gts;
  for (const Scene& s : dataset) {
    all_gts.insert(all_gts.end(), s.objects.begin(), s.objects.end());
  }
  TrainHistory history;
  history.c = model.config.c > 0 ? model.config.c : average_object_size(all_gts);
  if (!(history.c > 0)) history.c = Real(1);
  const RegLossConfig reg = model.config.reg_loss(history.c);

  const int n = static_cast<int>(dataset.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * per_epoch;
  const int eval_count = std::min(cfg.eval_images, n);

  const ParamSlots slots = model.slots();
  std::vector<int> order(n);
  int epoch = -1;
  for (int step = 0; step < total_steps; ++step) {
    const int pos = step % per_epoch;
    if (pos == 0) {
      ++epoch;
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle(derive_seed(cfg.seed, 0x5eed0000ULL + epoch));
      std::shuffle(order.begin(), order.end(), shuffle);
    }
    std::vector<const Scene*> batch;
    for (int k = pos * cfg.batch_size;
         k < std::min(n, (pos + 1) * cfg.batch_size); ++k) {
      batch.push_back(&dataset[order[k]]);
    }
    const FeatureMap images = stack_images(batch);

    DetectorCache cache;
    const FeatureMap head = detector_forward(images, model, Mode::kTrain, &cache);
    const Targets targets = assign_targets(batch_gts(batch), head.height(),
                                           head.width(), kHeadStride);
    FeatureMap grad_head;
    const LossBreakdown loss = detection_loss(head, targets, reg, &grad_head);
    if (!std::isfinite(loss.total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(step));
    }
    zero_grads(slots);
    detector_backward(grad_head, cache, model);
    if (!finite_grads(slots)) {
      throw NumericalError("non-finite gradient at step " + std::to_string(step));
    }
    sgd_step(slots, cfg.lr, cfg.weight_decay);

    const StepRecord rec{step, epoch, loss.total, loss.objectness,
                         loss.regression};
    history.steps.push_back(rec);
    if (on_step) on_step(rec);

    const bool epoch_end = pos == per_epoch - 1 || step == total_steps - 1;
    if (epoch_end && eval_count > 0) {
      EpochRecord e = evaluate_subset(model, dataset, eval_count, history.c, cfg);
      e.epoch = epoch;
      history.epochs.push_back(e);
    }
  }
  history.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return history;
}

Real mean_center_error(Detector& model, const std::vector<Scene>& dataset) {
  Real sum = 0;
  int count = 0;
  for (const Scene& s : dataset) {
    if (s.objects.empty()) continue;
    const std::vector<const Scene*> one{&s};
    const FeatureMap head = detector_forward(stack_images(one), model, Mode::kInfer);
    const Targets t = assign_targets({s.objects}, head.height(), head.width());
    for (int i = 0; i < t.height; ++i) {
      for (int j = 0; j < t.width; ++j) {
        const std::size_t idx = t.index(0, i, j);
        if (!t.positive[idx]) continue;
        sum += center_distance(decode_cell(head, 0, i, j), t.boxes[idx]);
        ++count;
      }
    }
  }
  return count > 0 ? sum / count : Real(0);
}

void save_weights(const std::filesystem::path& blob,
                  const std::filesystem::path& manifest,
                  const ParamSlots& slots) {
  std::ofstream out(blob, std::ios::binary);
  if (!out) throw FormatError("cannot write " + blob.string());
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const ParamSlot& s : slots) {
    for (Real v : s.value) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
      if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
      }
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
    tensors.push_back({{"name", s.name},
                       {"shape", s.shape},
                       {"offset", offset},
                       {"count", s.value.size()},
                       {"trainable", s.trainable}});
    offset += s.value.size();
  }
  write_json_file(manifest, {{"dtype", "float64"},
                             {"byte_order", "little"},
                             {"total", offset},
                             {"tensors", tensors}});
}

void load_weights(const std::filesystem::path& blob,
                  const std::filesystem::path& manifest,
                  const ParamSlots& slots) {
  const nlohmann::json m = read_json_file(manifest);
  const auto& tensors = m.at("tensors");
  if (tensors.size() != slots.size()) {
    throw FormatError("weight manifest has " + std::to_string(tensors.size()) +
                      " tensors, model has " + std::to_string(slots.size()));
  }
  std::ifstream in(blob, std::ios::binary);
  if (!in) throw FormatError("cannot open " + blob.string());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != slots[i].name ||
        t.at("shape").get<std::vector<int>>() != slots[i].shape) {
      throw FormatError("weight manifest entry " + std::to_string(i) +
                        " does not match " + slots[i].name);
    }
    in.seekg(static_cast<std::streamoff>(t.at("offset").get<std::size_t>() * 8));
    for (Real& v : slots[i].value) {
      char bytes[8];
      if (!in.read(bytes, 8)) throw FormatError(blob.string() + ": truncated");
      std::uint64_t bits;
      std::memcpy(&bits, bytes, 8);
      if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
      }
      v = static_cast<Real>(std::bit_cast<double>(bits));
    }
  }
}

}  // namespace tinydet
