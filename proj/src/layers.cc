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

#include "tinydet/layers.h"

#include <string>

namespace tinydet {

ConvUnit::ConvUnit(int in_channels, int out_channels, int kernel_size,
                   int stride_, int padding_, Options options)
    : kernel({out_channels, in_channels, kernel_size, kernel_size}),
      bias({options.bias ? out_channels : 0}),
      bn(options.batch_norm ? out_channels : 0),
      stride(stride_),
      padding(padding_),
      has_bn(options.batch_norm),
      has_act(options.activation) {}

void ConvUnit::init(Rng& rng) {
  const int k2 = kernel.value.extent(2) * kernel.value.extent(3);
  xavier_uniform(kernel.value.values(), in_channels() * k2,
                 out_channels() * k2, rng);
}

void ConvUnit::collect(ParamSlots& out, std::string_view prefix) {
  const std::string p(prefix);
  add_slot(out, p, "kernel", kernel);
  if (bias.value.size() > 0) add_slot(out, p, "bias", bias);
  if (has_bn) bn.collect(out, p + "bn.");
}

FeatureMap conv_unit_forward(const FeatureMap& input, ConvUnit& unit,
                             Mode mode, ConvUnitCache* cache) {
  FeatureMap y = conv2d(input, unit.kernel.value, unit.bias.value.values(),
                        unit.stride, unit.padding);
  if (unit.has_bn) {
    y = batch_norm(y, unit.bn, mode, cache ? &cache->bn : nullptr);
  }
  if (cache) cache->input = input;
  if (!unit.has_act) return y;
  FeatureMap out = silu(y);
  if (cache) cache->pre_activation = std::move(y);
  return out;
}

FeatureMap conv_unit_backward(const FeatureMap& grad_output,
                              const ConvUnitCache& cache, ConvUnit& unit) {
  FeatureMap g = unit.has_act ? silu_backward(cache.pre_activation, grad_output)
                              : grad_output;
  if (unit.has_bn) g = batch_norm_backward(g, cache.bn, unit.bn);
  return conv2d_backward(cache.input, unit.kernel.value, unit.stride,
                         unit.padding, g, unit.kernel.grad,
                         unit.bias.grad.values());
}

LinearParams::LinearParams(int in_features, int out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

void LinearParams::init(Rng& rng) {
  xavier_uniform(weight.value.values(), weight.value.extent(1),
                 weight.value.extent(0), rng);
}

void LinearParams::collect(ParamSlots& out, std::string_view prefix) {
  add_slot(out, prefix, "weight", weight);
  add_slot(out, prefix, "bias", bias);
}

}  // namespace tinydet
