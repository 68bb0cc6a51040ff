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

// Stride-2 stems: residual Haar wavelet downsampling and the two comparison
// stems (large-kernel convolution alone, Focus space-to-depth).

#ifndef TINYDET_RHWD_H_
#define TINYDET_RHWD_H_

#include <string_view>

#include "tinydet/layers.h"

namespace tinydet {

// Single-level orthonormal 2D Haar decomposition. For each 2x2 block
// [[a, b], [c, d]]:
//   approx     = (a + b + c + d) / 2
//   horizontal = (a - b + c - d) / 2
//   vertical   = (a + b - c - d) / 2
//   diagonal   = (a - b - c + d) / 2
struct WaveletSubbands {
  FeatureMap approx;
  FeatureMap horizontal;
  FeatureMap vertical;
  FeatureMap diagonal;
};

WaveletSubbands haar_forward(const FeatureMap& input);

// Exact inverse. The transform is orthogonal, so this is also its adjoint and
// serves as the backward pass of haar_forward.
FeatureMap haar_inverse(const WaveletSubbands& subbands);

// Channel layout (approx, horizontal, vertical, diagonal), each C channels.
FeatureMap concat_subbands(const WaveletSubbands& subbands);
WaveletSubbands split_subbands(const FeatureMap& packed);

enum class StemVariant { kRhwd, kLargeKernel, kFocus };

// Weights of whichever stem variant is selected. Only the units the variant
// uses carry parameters:
//   rhwd:        global (6x6/2 conv + BN + SiLU) and local (3x3 conv + SiLU
//                over the 4C wavelet channels)
//   largekernel: global only
//   focus:       focus (3x3 conv + BN + SiLU over the 4C unshuffled channels)
struct StemWeights {
  StemVariant variant = StemVariant::kRhwd;
  ConvUnit global;
  ConvUnit local;
  ConvUnit focus;

  static StemWeights make(StemVariant variant, int in_channels,
                          int out_channels, Rng& rng);

  int out_channels() const;
  void collect(ParamSlots& out, std::string_view prefix);
};

struct StemCache {
  ConvUnitCache global;
  ConvUnitCache local;
  ConvUnitCache focus;
};

// I_fuse = SiLU(Conv3x3(Cat(A, H, V, D))) + SiLU(BN(Conv6x6(I))).
FeatureMap rhwd_forward(const FeatureMap& image, StemWeights& weights,
                        Mode mode, StemCache* cache = nullptr);

// SiLU(BN(Conv6x6(I))): the global branch alone.
FeatureMap largekernel_forward(const FeatureMap& image, StemWeights& weights,
                               Mode mode, StemCache* cache = nullptr);

// SiLU(BN(Conv3x3(pixel_unshuffle(I)))).
FeatureMap focus_forward(const FeatureMap& image, StemWeights& weights,
                         Mode mode, StemCache* cache = nullptr);

// Dispatches on weights.variant.
FeatureMap stem_forward(const FeatureMap& image, StemWeights& weights,
                        Mode mode, StemCache* cache = nullptr);

FeatureMap stem_backward(const FeatureMap& grad_output,
                         const StemCache& cache, StemWeights& weights);

}  // namespace tinydet

#endif  // TINYDET_RHWD_H_
