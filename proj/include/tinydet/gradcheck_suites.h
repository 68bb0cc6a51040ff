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

// Finite-difference checks of every hand-written backward pass, grouped by
// module. Each check projects the operation's output onto a fixed random
// tensor and differentiates that scalar.

#ifndef TINYDET_GRADCHECK_SUITES_H_
#define TINYDET_GRADCHECK_SUITES_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tinydet/gradcheck.h"

namespace tinydet {

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kLossTolerance = 1e-6;
inline constexpr double kEndToEndTolerance = 1e-3;

// "tensor", "rhwd", "grm", "csha", "losses", "sppf", "detector".
std::vector<std::string> gradcheck_modules();

// Accepts any name from gradcheck_modules() or "all".
std::vector<GradCheckReport> run_gradcheck(std::string_view module,
                                           std::uint64_t seed);

}  // namespace tinydet

#endif  // TINYDET_GRADCHECK_SUITES_H_
