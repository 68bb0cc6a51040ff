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

#include "tinydet/rhwd.h"

#include <array>
#include <string>

namespace tinydet {

namespace {

constexpr int kGlobalKernel = 6;
constexpr int kGlobalStride = 2;
// The only padding at which a 6x6 stride-2 window emits exactly (H/2, W/2).
constexpr int kGlobalPadding = 2;

void require_even(const FeatureMap& x, std::string_view what) {
  if (x.height() % 2 != 0) {
    throw GeometryError(std::string(what) + ": height " +
                        std::to_string(x.height()) + " is odd");
  }
  if (x.width() % 2 != 0) {
    throw GeometryError(std::string(what) + ": width " +
                        std::to_string(x.width()) + " is odd");
  }
}

void require_variant(const StemWeights& w, StemVariant v,
                     std::string_view what) {
  const bool ok =
      w.variant == v ||
      (v == StemVariant::kLargeKernel && w.variant == StemVariant::kRhwd);
  if (!ok) throw ConfigError(std::string(what) + ": stem weights mismatch");
}

}  // namespace

WaveletSubbands haar_forward(const FeatureMap& input) {
  require_even(input, "haar_forward");
  const FeatureMap::Extents half{input.batch(), input.channels(),
                                 input.height() / 2, input.width() / 2};
  WaveletSubbands s{FeatureMap(half), FeatureMap(half), FeatureMap(half),
                    FeatureMap(half)};
  for (int b = 0; b < input.batch(); ++b) {
    for (int c = 0; c < input.channels(); ++c) {
      for (int y = 0; y < half[2]; ++y) {
        for (int x = 0; x < half[3]; ++x) {
          const Real a = input(b, c, 2 * y, 2 * x);
          const Real bb = input(b, c, 2 * y, 2 * x + 1);
          const Real cc = input(b, c, 2 * y + 1, 2 * x);
          const Real d = input(b, c, 2 * y + 1, 2 * x + 1);
          s.approx(b, c, y, x) = (a + bb + cc + d) / 2;
          s.horizontal(b, c, y, x) = (a - bb + cc - d) / 2;
          s.vertical(b, c, y, x) = (a + bb - cc - d) / 2;
          s.diagonal(b, c, y, x) = (a - bb - cc + d) / 2;
        }
      }
    }
  }
  return s;
}

FeatureMap haar_inverse(const WaveletSubbands& s) {
  const auto& e = s.approx.extents();
  if (e != s.horizontal.extents() || e != s.vertical.extents() ||
      e != s.diagonal.extents()) {
    throw GeometryError("haar_inverse: subbands differ in shape");
  }
  FeatureMap out({e[0], e[1], e[2] * 2, e[3] * 2});
  for (int b = 0; b < e[0]; ++b) {
    for (int c = 0; c < e[1]; ++c) {
      for (int y = 0; y < e[2]; ++y) {
        for (int x = 0; x < e[3]; ++x) {
          const Real av = s.approx(b, c, y, x);
          const Real hv = s.horizontal(b, c, y, x);
          const Real vv = s.vertical(b, c, y, x);
          const Real dv = s.diagonal(b, c, y, x);
          out(b, c, 2 * y, 2 * x) = (av + hv + vv + dv) / 2;
          out(b, c, 2 * y, 2 * x + 1) = (av - hv + vv - dv) / 2;
          out(b, c, 2 * y + 1, 2 * x) = (av + hv - vv - dv) / 2;
          out(b, c, 2 * y + 1, 2 * x + 1) = (av - hv - vv + dv) / 2;
        }
      }
    }
  }
  return out;
}

FeatureMap concat_subbands(const WaveletSubbands& s) {
  const std::array<const FeatureMap*, 4> parts{&s.approx, &s.horizontal,
                                               &s.vertical, &s.diagonal};
  return concat_channels(parts);
}

WaveletSubbands split_subbands(const FeatureMap& packed) {
  if (packed.channels() % 4 != 0) {
    throw GeometryError("split_subbands: channel count " +
                        std::to_string(packed.channels()) +
                        " is not a multiple of 4");
  }
  const int c = packed.channels() / 4;
  const std::array<int, 4> sizes{c, c, c, c};
  auto parts = split_channels(packed, sizes);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]),
          std::move(parts[3])};
}

StemWeights StemWeights::make(StemVariant variant, int in_channels,
                              int out_channels, Rng& rng) {
  StemWeights w;
  w.variant = variant;
  if (variant == StemVariant::kRhwd || variant == StemVariant::kLargeKernel) {
    w.global = ConvUnit(in_channels, out_channels, kGlobalKernel,
                        kGlobalStride, kGlobalPadding,
                        {.bias = false, .batch_norm = true, .activation = true});
    w.global.init(rng);
  }
  if (variant == StemVariant::kRhwd) {
    w.local = ConvUnit(4 * in_channels, out_channels, 3, 1, 1,
                       {.bias = true, .batch_norm = false, .activation = true});
    w.local.init(rng);
  }
  if (variant == StemVariant::kFocus) {
    w.focus = ConvUnit(4 * in_channels, out_channels, 3, 1, 1,
                       {.bias = false, .batch_norm = true, .activation = true});
    w.focus.init(rng);
  }
  return w;
}

int StemWeights::out_channels() const {
  return variant == StemVariant::kFocus ? focus.out_channels()
                                        : global.out_channels();
}

void StemWeights::collect(ParamSlots& out, std::string_view prefix) {
  const std::string p(prefix);
  switch (variant) {
    case StemVariant::kRhwd:
      global.collect(out, p + "global.");
      local.collect(out, p + "local.");
      break;
    case StemVariant::kLargeKernel:
      global.collect(out, p + "global.");
      break;
    case StemVariant::kFocus:
      focus.collect(out, p + "focus.");
      break;
  }
}

FeatureMap rhwd_forward(const FeatureMap& image, StemWeights& weights,
                        Mode mode, StemCache* cache) {
  if (weights.variant != StemVariant::kRhwd) {
    throw ConfigError("rhwd_forward: weights are not an RHWD stem");
  }
  require_even(image, "rhwd_forward");
  FeatureMap global = conv_unit_forward(image, weights.global, mode,
                                        cache ? &cache->global : nullptr);
  const FeatureMap packed = concat_subbands(haar_forward(image));
  FeatureMap local = conv_unit_forward(packed, weights.local, mode,
                                       cache ? &cache->local : nullptr);
  add_inplace(local, global);
  return local;
}

FeatureMap largekernel_forward(const FeatureMap& image, StemWeights& weights,
                               Mode mode, StemCache* cache) {
  require_variant(weights, StemVariant::kLargeKernel, "largekernel_forward");
  require_even(image, "largekernel_forward");
  return conv_unit_forward(image, weights.global, mode,
                           cache ? &cache->global : nullptr);
}

FeatureMap focus_forward(const FeatureMap& image, StemWeights& weights,
                         Mode mode, StemCache* cache) {
  require_variant(weights, StemVariant::kFocus, "focus_forward");
  return conv_unit_forward(pixel_unshuffle(image), weights.focus, mode,
                           cache ? &cache->focus : nullptr);
}

FeatureMap stem_forward(const FeatureMap& image, StemWeights& weights,
                        Mode mode, StemCache* cache) {
  switch (weights.variant) {
    case StemVariant::kRhwd:
      return rhwd_forward(image, weights, mode, cache);
    case StemVariant::kLargeKernel:
      return largekernel_forward(image, weights, mode, cache);
    case StemVariant::kFocus:
      return focus_forward(image, weights, mode, cache);
  }
  throw ConfigError("stem_forward: unknown variant");
}

FeatureMap stem_backward(const FeatureMap& grad_output,
                         const StemCache& cache, StemWeights& weights) {
  switch (weights.variant) {
    case StemVariant::kRhwd: {
      FeatureMap grad =
          conv_unit_backward(grad_output, cache.global, weights.global);
      const FeatureMap grad_packed =
          conv_unit_backward(grad_output, cache.local, weights.local);
      add_inplace(grad, haar_inverse(split_subbands(grad_packed)));
      return grad;
    }
    case StemVariant::kLargeKernel:
      return conv_unit_backward(grad_output, cache.global, weights.global);
    case StemVariant::kFocus:
      return pixel_shuffle(
          conv_unit_backward(grad_output, cache.focus, weights.focus));
  }
  throw ConfigError("stem_backward: unknown variant");
}

}  // namespace tinydet
