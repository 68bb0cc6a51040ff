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


#include <string>

#include "doctest.h"
#include "tinydet/gradcheck_suites.h"

namespace tinydet {
namespace {

TEST_CASE("every backward pass matches finite differences") {
  for (const std::string& module : gradcheck_modules()) {
    for (std::uint64_t seed : {0u, 1u}) {
      for (const GradCheckReport& r : run_gradcheck(module, seed)) {
        CAPTURE(module);
        CAPTURE(r.label);
        CAPTURE(r.max_relative_error());
        CHECK(r.pass);
        for (const GradCheckEntry& e : r.entries) CHECK(e.checked > 0);
      }
    }
  }
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(0, 0) == 0);
  CHECK(relative_error(1, 1.1) == doctest::Approx(0.1 / 1.1));
  CHECK(relative_error(1e-12, 0) == doctest::Approx(1e-4));
  CHECK(central_difference_noise(1, 1, 1e-5) > 0);
}

TEST_CASE("unknown module is rejected") {
  CHECK_THROWS_AS(run_gradcheck("nope", 0), ConfigError);
}

}  // namespace
}  // namespace tinydet
