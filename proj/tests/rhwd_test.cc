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
#include "tinydet/rhwd.h"

namespace tinydet {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

Real energy(const FeatureMap& m) {
  Real s = 0;
  for (Real v : m.values()) s += v * v;
  return s;
}

TEST_CASE("haar round-trip and Parseval on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 * (1 + static_cast<int>(rng() % 8));
    const int w = 2 * (1 + static_cast<int>(rng() % 8));
    const FeatureMap x = random_tensor<4>({1 + trial % 2, 2, h, w}, rng, -5, 5);
    const WaveletSubbands s = haar_forward(x);
    CHECK(max_abs_diff(haar_inverse(s), x) < 1e-10);
    const Real sub = energy(s.approx) + energy(s.horizontal) +
                     energy(s.vertical) + energy(s.diagonal);
    CHECK(std::abs(sub - energy(x)) < 1e-10 * std::max(Real(1), energy(x)));
  }
}

TEST_CASE("haar of a constant image") {
  const Real c = 0.37;
  const FeatureMap x({1, 3, 8, 6}, c);
  const WaveletSubbands s = haar_forward(x);
  CHECK(s.approx.height() == 4);
  CHECK(s.approx.width() == 3);
  for (Real v : s.approx.values()) CHECK(v == 2 * c);
  for (const FeatureMap* m : {&s.horizontal, &s.vertical, &s.diagonal}) {
    for (Real v : m->values()) CHECK(v == 0);
  }
}

TEST_CASE("haar single block closed form") {
  FeatureMap x({1, 1, 2, 2});
  x(0, 0, 0, 0) = 1, x(0, 0, 0, 1) = 2, x(0, 0, 1, 0) = 3, x(0, 0, 1, 1) = 4;
  const WaveletSubbands s = haar_forward(x);
  CHECK(s.approx[0] == 5);
  CHECK(s.horizontal[0] == -1);
  CHECK(s.vertical[0] == -2);
  CHECK(s.diagonal[0] == 0);
}

TEST_CASE("haar rejects odd extents") {
  CHECK_THROWS_AS(haar_forward(FeatureMap({1, 1, 3, 4})), GeometryError);
  CHECK_THROWS_AS(haar_forward(FeatureMap({1, 1, 4, 5})), GeometryError);
}

TEST_CASE("subband packing round-trips") {
  Rng rng(12);
  const FeatureMap x = random_tensor<4>({2, 3, 4, 4}, rng);
  const WaveletSubbands s = haar_forward(x);
  const FeatureMap packed = concat_subbands(s);
  CHECK(packed.channels() == 12);
  const WaveletSubbands back = split_subbands(packed);
  CHECK(max_abs_diff(back.diagonal, s.diagonal) == 0);
  CHECK_THROWS_AS(split_subbands(FeatureMap({1, 5, 2, 2})), GeometryError);
}

TEST_CASE("every stem halves the resolution") {
  Rng rng(13);
  const FeatureMap img = random_tensor<4>({2, 3, 16, 16}, rng, 0, 1);
  for (StemVariant v :
       {StemVariant::kRhwd, StemVariant::kLargeKernel, StemVariant::kFocus}) {
    StemWeights w = StemWeights::make(v, 3, 8, rng);
    CHECK(w.out_channels() == 8);
    const FeatureMap y = stem_forward(img, w, Mode::kTrain);
    CHECK(y.batch() == 2);
    CHECK(y.channels() == 8);
    CHECK(y.height() == 8);
    CHECK(y.width() == 8);
    CHECK(all_finite(y));
    CHECK_THROWS_AS(stem_forward(FeatureMap({1, 3, 15, 16}), w, Mode::kInfer),
                    GeometryError);
  }
}

TEST_CASE("rhwd is the sum of its local and global branches") {
  Rng rng(14);
  const FeatureMap img = random_tensor<4>({1, 3, 8, 8}, rng, 0, 1);
  StemWeights w = StemWeights::make(StemVariant::kRhwd, 3, 4, rng);
  const FeatureMap fused = rhwd_forward(img, w, Mode::kInfer);
  const FeatureMap global = largekernel_forward(img, w, Mode::kInfer);
  const FeatureMap local = conv_unit_forward(
      concat_subbands(haar_forward(img)), w.local, Mode::kInfer);
  CHECK(max_abs_diff(fused, add(global, local)) < 1e-14);
}

TEST_CASE("rhwd_forward refuses other stems") {
  Rng rng(15);
  StemWeights w = StemWeights::make(StemVariant::kFocus, 3, 4, rng);
  CHECK_THROWS_AS(rhwd_forward(FeatureMap({1, 3, 4, 4}), w, Mode::kInfer),
                  ConfigError);
}

}  // namespace
}  // namespace tinydet
