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

#ifndef TINYDET_GRADCHECK_H_
#define TINYDET_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "tinydet/params.h"

namespace tinydet {

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::string label;
  std::vector<GradCheckEntry> entries;
  double tolerance = 0;
  bool pass = true;

  double max_relative_error() const;
  nlohmann::json to_json() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // 0 checks every element; otherwise a seeded random subset per slot.
  std::size_t max_elements_per_slot = 0;
  std::uint64_t seed = 0;
};

// Compares analytic gradients against central finite differences.
//
// `loss` runs a full forward pass and returns the scalar objective.
// `backward` must zero and then fill the gradient buffer of every slot from a
// fresh forward/backward at the current values. Slot values are perturbed in
// place and restored afterwards.
GradCheckReport grad_check(const std::string& label,
                           const std::function<double()>& loss,
                           const std::function<void()>& backward,
                           const ParamSlots& slots,
                           const GradCheckOptions& options = {});

// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric,
                             double floor = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Round-off bound of a central difference: a loss known to about
// kRoundoffUlps ulps, divided by the step.
inline constexpr double kRoundoffUlps = 100;

inline double central_difference_noise(double plus, double minus,
                                       double step) {
  const double scale = std::max({1.0, std::abs(plus), std::abs(minus)});
  return kRoundoffUlps * std::numeric_limits<double>::epsilon() * scale /
         (2.0 * step);
}

}  // namespace tinydet

#endif  // TINYDET_GRADCHECK_H_
