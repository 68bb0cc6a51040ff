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

#ifndef TINYDET_LAYERS_H_
#define TINYDET_LAYERS_H_

#include <string_view>

#include "tinydet/ops.h"
#include "tinydet/params.h"

namespace tinydet {

// conv -> [batch norm] -> [SiLU]
struct ConvUnit {
  struct Options {
    bool bias = false;
    bool batch_norm = true;
    bool activation = true;
  };

  Param<4> kernel;
  Param<1> bias;  // zero-length when Options::bias is false
  BatchNorm bn;   // zero-channel when Options::batch_norm is false
  int stride = 1;
  int padding = 0;
  bool has_bn = false;
  bool has_act = false;

  ConvUnit() = default;
  ConvUnit(int in_channels, int out_channels, int kernel_size, int stride,
           int padding, Options options);

  int in_channels() const { return kernel.value.extent(1); }
  int out_channels() const { return kernel.value.extent(0); }

  // Xavier-uniform kernel; bias stays zero.
  void init(Rng& rng);
  void collect(ParamSlots& out, std::string_view prefix);
};

struct ConvUnitCache {
  FeatureMap input;
  FeatureMap pre_activation;
  BatchNormCache bn;
};

FeatureMap conv_unit_forward(const FeatureMap& input, ConvUnit& unit,
                             Mode mode, ConvUnitCache* cache = nullptr);

FeatureMap conv_unit_backward(const FeatureMap& grad_output,
                              const ConvUnitCache& cache, ConvUnit& unit);

struct LinearParams {
  Param<2> weight;  // (out, in)
  Param<1> bias;

  LinearParams() = default;
  LinearParams(int in_features, int out_features);

  void init(Rng& rng);
  void collect(ParamSlots& out, std::string_view prefix);
};

}  // namespace tinydet

#endif  // TINYDET_LAYERS_H_
