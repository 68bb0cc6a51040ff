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

#include "tinydet/params.h"

#include <algorithm>
#include <cmath>

namespace tinydet {

void zero_grads(const ParamSlots& slots) {
  for (const ParamSlot& s : slots) {
    std::fill(s.grad.begin(), s.grad.end(), Real(0));
  }
}

void xavier_uniform(std::span<Real> values, int fan_in, int fan_out,
                    Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& v : values) v = static_cast<Real>(dist(rng));
}

void normal_fill(std::span<Real> values, Real stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Real& v : values) v = static_cast<Real>(dist(rng));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tinydet
