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

// Synthetic tiny-object scenes.

#ifndef TINYDET_SCENE_H_
#define TINYDET_SCENE_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tinydet/coco_io.h"
#include "tinydet/params.h"

namespace tinydet {

struct SceneConfig {
  int size = 64;  // square, even, divisible by 32
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 3;
  int max_size = 8;
  Real clutter = Real(0.15);
  Real background = Real(0.25);
  std::uint64_t seed = 0;
  // When positive, object centers keep at least this Chebyshev distance from
  // the center of the grid cell (of the given stride) containing them.
  Real center_exclusion = 0;
  int exclusion_stride = 16;

  void validate() const;
};

struct Scene {
  FeatureMap image;  // (1, 3, size, size), values k/255
  std::vector<GroundTruth> objects;
};

// Deterministic for a given (config.seed, index).
Scene gen_scene(const SceneConfig& config, int index);

std::vector<Scene> gen_dataset(const SceneConfig& config, int count);

// Binary PPM (P6). Values are clamped to [0, 1] and quantized to 8 bits.
void write_ppm(const std::filesystem::path& path, const FeatureMap& image);
FeatureMap read_ppm(const std::filesystem::path& path);

// Writes images/NNNNN.ppm and gt.json under dir. Image ids start at 1.
void write_dataset(const std::filesystem::path& dir,
                   const std::vector<Scene>& scenes);
std::vector<Scene> read_dataset(const std::filesystem::path& dir);

// Stacks single-image scenes into one (n, 3, H, W) batch.
FeatureMap stack_images(const std::vector<const Scene*>& scenes);

}  // namespace tinydet

#endif  // TINYDET_SCENE_H_
