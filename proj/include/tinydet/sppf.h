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

#ifndef TINYDET_SPPF_H_
#define TINYDET_SPPF_H_

#include <array>
#include <string_view>
#include <vector>

#include "tinydet/layers.h"

namespace tinydet {

// reduce (1x1) -> three chained 5x5/1 max pools -> concat(x, p1, p2, p3)
// -> expand (1x1). Both convs carry BN + SiLU.
struct SppfWeights {
  ConvUnit reduce;
  ConvUnit expand;

  static SppfWeights make(int channels, Rng& rng);
  void collect(ParamSlots& out, std::string_view prefix);
};

struct SppfCache {
  ConvUnitCache reduce;
  ConvUnitCache expand;
  FeatureMap::Extents pooled_extents{};
  std::array<std::vector<std::size_t>, 3> argmax;
};

inline constexpr int kSppfPool = 5;

FeatureMap sppf_forward(const FeatureMap& input, SppfWeights& weights,
                        Mode mode, SppfCache* cache = nullptr);

FeatureMap sppf_backward(const FeatureMap& grad_output, const SppfCache& cache,
                         SppfWeights& weights);

}  // namespace tinydet

#endif  // TINYDET_SPPF_H_
