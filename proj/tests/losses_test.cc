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


#include <cmath>

#include "doctest.h"
#include "test_util.h"
#include "tinydet/boxes.h"

namespace tinydet {
namespace {

TEST_CASE("iou closed forms") {
  const Box a{0, 0, 2, 2};
  CHECK(std::abs(iou(a, Box{1, 1, 3, 3}) - 1.0 / 7) < 1e-15);
  CHECK(iou(a, a) == 1);
  CHECK(iou(a, Box{2, 0, 4, 2}) == 0);  // touching edge
  CHECK(iou(a, Box{5, 5, 6, 6}) == 0);
  CHECK(iou(Box{1, 1, 1, 1}, Box{1, 1, 1, 1}) == 0);  // empty union
  CHECK(std::abs(iou(a, Box{0, 0, 1, 2}) - 0.5) < 1e-15);
}

TEST_CASE("iou symmetry, range and translation invariance") {
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const Box a = testing::random_box(rng), b = testing::random_box(rng);
    const Real v = iou(a, b);
    CHECK(v >= 0);
    CHECK(v <= 1);
    CHECK(v == iou(b, a));
    const Real tx = testing::uniform(rng, -50, 50), ty = testing::uniform(rng, -50, 50);
    const Box at{a.x_min + tx, a.y_min + ty, a.x_max + tx, a.y_max + ty};
    const Box bt{b.x_min + tx, b.y_min + ty, b.x_max + tx, b.y_max + ty};
    CHECK(std::abs(iou(at, bt) - v) < 1e-12);
  }
}

TEST_CASE("center-assisted loss closed forms") {
  const Real c = 5;
  const Box gt = Box::from_center(10, 10, 4, 6);
  CHECK(center_assisted_loss(gt, gt, c) == 0);
  const Box at_c = Box::from_center(10 + 3, 10 + 4, 2, 2);  // D = 5
  CHECK(std::abs(center_assisted_loss(at_c, gt, c) - (1 - std::exp(-1.0))) <= 1e-12);
  const Real d = c * std::log(2.0);
  const Box half = Box::from_center(10 + d, 10, 4, 6);
  CHECK(std::abs(center_assisted_loss(half, gt, c) - 0.5) <= 1e-12);
  CHECK_THROWS_AS(center_assisted_loss(gt, gt, 0), ConfigError);
  CHECK_THROWS_AS(center_assisted_loss(gt, gt, -1), ConfigError);
}

TEST_CASE("center-assisted loss is monotone in distance and bounded") {
  const Box gt = Box::from_center(0, 0, 2, 2);
  Real prev = -1;
  for (Real d = 0; d < 100; d += 0.5) {
    const Real v = center_assisted_loss(Box::from_center(d, 0, 2, 2), gt, 3);
    CHECK(v > prev);
    CHECK(v < 1);
    prev = v;
  }
}

TEST_CASE("regression loss combines both terms") {
  const Box p{0, 0, 2, 2}, g{1, 1, 3, 3};
  RegLossConfig cfg{0.25, 0.75, 2};
  const Real want = 0.75 * (1 - 1.0 / 7) +
                    0.25 * (1 - std::exp(-std::sqrt(2.0) / 2));
  CHECK(std::abs(regression_loss(p, g, cfg) - want) < 1e-15);
  CHECK_THROWS_AS(regression_loss(p, g, RegLossConfig{-1, 1, 1}), ConfigError);
  CHECK_THROWS_AS(regression_loss(p, g, RegLossConfig{0, 0, 1}), ConfigError);
  CHECK_THROWS_AS(regression_loss(p, g, RegLossConfig{0.5, 0.5, 0}), ConfigError);
}

TEST_CASE("regression gradient matches finite differences") {
  Rng rng(42);
  int checked = 0;
  while (checked < 100) {
    const Box p = testing::random_box(rng, 20), g = testing::random_box(rng, 20);
    if (iou(p, g) <= 0.05) continue;
    const RegLossConfig cfg{testing::uniform(rng, 0, 1), testing::uniform(rng, 0.1, 1),
                            testing::uniform(rng, 1, 8)};
    const auto grad = regression_loss_grad(p, g, cfg);
    const Real h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Box plus = p, minus = p;
      testing::coord(plus, i) += h;
      testing::coord(minus, i) -= h;
      const Real fd =
          (regression_loss(plus, g, cfg) - regression_loss(minus, g, cfg)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) < 1e-6);
    }
    ++checked;
  }
}

TEST_CASE("disjoint boxes get a gradient only from the center term") {
  Rng rng(43);
  for (int i = 0; i < 100; ++i) {
    const auto [p, g] = testing::random_disjoint_pair(rng);
    REQUIRE(iou(p, g) == 0);
    const auto iou_only = regression_loss_grad(p, g, RegLossConfig{0, 1, 4});
    for (Real v : iou_only) CHECK(v == 0);
    const auto assisted = regression_loss_grad(p, g, RegLossConfig{0.5, 0.5, 4});
    Real norm = 0;
    for (Real v : assisted) norm += v * v;
    CHECK(norm > 0);
    // A step against the gradient moves the centers closer.
    Box moved = p;
    for (int k = 0; k < 4; ++k) testing::coord(moved, k) -= 0.1 * assisted[k];
    CHECK(center_distance(moved, g) < center_distance(p, g));
  }
}

}  // namespace
}  // namespace tinydet
