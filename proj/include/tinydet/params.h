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

#ifndef TINYDET_PARAMS_H_
#define TINYDET_PARAMS_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinydet/tensor.h"

namespace tinydet {

using Rng = std::mt19937_64;

// Learnable tensor with a gradient slot of identical shape.
template <std::size_t R>
struct Param {
  Tensor<R> value;
  Tensor<R> grad;

  Param() = default;
  explicit Param(const typename Tensor<R>::Extents& extents)
      : value(extents), grad(extents) {}

  void zero_grad() { grad.set_zero(); }
};

// Type-erased view of one named tensor inside a weight collection. Spans stay
// valid for as long as the owning collection is neither moved nor resized.
struct ParamSlot {
  std::string name;
  std::vector<int> shape;
  std::span<Real> value;
  std::span<Real> grad;  // empty for non-trainable buffers
  bool trainable = true;
};

using ParamSlots = std::vector<ParamSlot>;

template <std::size_t R>
void add_slot(ParamSlots& out, std::string_view prefix, std::string_view name,
              Param<R>& p) {
  out.push_back({std::string(prefix) + std::string(name),
                 std::vector<int>(p.value.extents().begin(),
                                  p.value.extents().end()),
                 p.value.values(), p.grad.values(), true});
}

template <std::size_t R>
void add_buffer(ParamSlots& out, std::string_view prefix,
                std::string_view name, Tensor<R>& t) {
  out.push_back({std::string(prefix) + std::string(name),
                 std::vector<int>(t.extents().begin(), t.extents().end()),
                 t.values(), {}, false});
}

void zero_grads(const ParamSlots& slots);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(std::span<Real> values, int fan_in, int fan_out, Rng& rng);

void normal_fill(std::span<Real> values, Real stddev, Rng& rng);

// Stateless 64-bit mixer used to derive independent per-item seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace tinydet

#endif  // TINYDET_PARAMS_H_
