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

#include "tinydet/gradcheck.h"

#include <algorithm>
#include <numeric>

namespace tinydet {

double GradCheckReport::max_relative_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : entries) {
    params.push_back({{"name", e.name},
                      {"max_relative_error", e.max_relative_error},
                      {"checked", e.checked}});
  }
  return {{"label", label},
          {"tolerance", tolerance},
          {"pass", pass},
          {"max_relative_error", max_relative_error()},
          {"parameters", params}};
}

GradCheckReport grad_check(const std::string& label,
                           const std::function<double()>& loss,
                           const std::function<void()>& backward,
                           const ParamSlots& slots,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.label = label;
  report.tolerance = options.tolerance;

  backward();
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(slots.size());
  for (const ParamSlot& s : slots) {
    analytic.emplace_back(s.grad.begin(), s.grad.end());
  }

  Rng rng(options.seed);
  for (std::size_t si = 0; si < slots.size(); ++si) {
    const ParamSlot& slot = slots[si];
    if (!slot.trainable || slot.value.empty()) continue;
    std::vector<std::size_t> indices(slot.value.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements_per_slot > 0 &&
        indices.size() > options.max_elements_per_slot) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements_per_slot);
      std::sort(indices.begin(), indices.end());
    }

    GradCheckEntry entry{slot.name, 0.0, indices.size()};
    for (std::size_t idx : indices) {
      const Real original = slot.value[idx];
      slot.value[idx] = original + static_cast<Real>(options.step);
      const double plus = loss();
      slot.value[idx] = original - static_cast<Real>(options.step);
      const double minus = loss();
      slot.value[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      // Below the round-off level the comparison becomes absolute.
      const double floor = std::max(
          1e-8, central_difference_noise(plus, minus, options.step) /
                    options.tolerance);
      entry.max_relative_error =
          std::max(entry.max_relative_error,
                   relative_error(analytic[si][idx], numeric, floor));
    }
    report.pass = report.pass && entry.max_relative_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace tinydet
