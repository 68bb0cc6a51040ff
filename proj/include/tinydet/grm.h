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

// Global relation modeling over the stride-32 map: flatten, add a learnable
// positional embedding, layer-normalize, multi-head self-attention, project,
// and add back onto the input map.

#ifndef TINYDET_GRM_H_
#define TINYDET_GRM_H_

#include <string_view>
#include <vector>

#include "tinydet/layers.h"

namespace tinydet {

struct GrmWeights {
  int heads = 8;
  int tokens = 0;
  int channels = 0;
  // False gives the plain multi-head self-attention variant: no positional
  // embedding and no normalization before attention.
  bool positional_and_norm = true;

  Param<2> pos_embed;  // (tokens, channels)
  LayerNorm norm;
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LinearParams output;

  // Positional embedding ~ N(0, 0.02^2); projections Xavier; biases zero.
  static GrmWeights make(int channels, int height, int width, int heads,
                         bool positional_and_norm, Rng& rng);

  int head_dim() const { return channels / heads; }
  void collect(ParamSlots& out, std::string_view prefix);
};

struct MhsaCache {
  TokenSequence input;
  TokenSequence q, k, v;
  TokenSequence context;  // concatenated head outputs, before W_O
  // Attention probabilities, layout (batch, head, query token, key token).
  std::vector<Real> attention;
};

struct GrmCache {
  int height = 0;
  int width = 0;
  TokenSequence embedded;  // flatten + E_pos, before normalization
  LayerNormCache norm;
  MhsaCache attn;
  TokenSequence pre_residual;
};

// Row-major flatten, add E_pos (broadcast over batch), layer-normalize.
// The plain variant returns the bare flatten.
TokenSequence flatten_with_pos(const FeatureMap& p5, const GrmWeights& weights,
                               GrmCache* cache = nullptr);

// softmax(Q_i K_i^T / sqrt(d)) V_i per head, concatenated, then W_O.
TokenSequence mhsa(const TokenSequence& seq, const GrmWeights& weights,
                   MhsaCache* cache = nullptr);

TokenSequence mhsa_backward(const TokenSequence& grad_output,
                            const MhsaCache& cache, GrmWeights& weights);

// unflatten(mhsa(flatten_with_pos(p5))) + p5.
FeatureMap grm_forward(const FeatureMap& p5, const GrmWeights& weights,
                       GrmCache* cache = nullptr);

FeatureMap grm_backward(const FeatureMap& grad_output, const GrmCache& cache,
                        GrmWeights& weights);

}  // namespace tinydet

#endif  // TINYDET_GRM_H_
