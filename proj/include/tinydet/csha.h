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

// Cross-scale hybrid attention.
//
// Every stride-16 pixel q queries K offset sample points on each of the
// stride-8/16/32 levels, per attention head:
//
//   out(q) = W_out * concat_m [ sum_{l,k} A_mlk(q) * V_l^m(ref_l(q) + dp_mlk(q)) ]
//            + Z(q)
//
// where V_l = per-level 1x1 projection to d_model channels, Z = V_4 at q,
// ref_l(q) = the query's normalized pixel-center reference point expressed in
// level-l pixel coordinates, dp = W_offset [Z(q), ref(q)] in level-l pixels,
// and A(q) = softmax over all (l, k) of W_attn Z(q), separately per head.

#ifndef TINYDET_CSHA_H_
#define TINYDET_CSHA_H_

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tinydet/layers.h"

namespace tinydet {

inline constexpr int kCshaLevels = 3;

struct CshaConfig {
  std::array<int, kCshaLevels> in_channels{};  // (P3, P4, P5)
  int d_model = 0;
  int out_channels = 0;
  int heads = 8;
  int points = 4;

  int head_dim() const { return d_model / heads; }
  int samples_per_head() const { return kCshaLevels * points; }
  void validate() const;
};

struct CshaWeights {
  CshaConfig config;
  std::array<LinearParams, kCshaLevels> level_proj;  // (d_model, C_l)
  LinearParams offset_head;     // (heads*L*K*2, d_model + 2)
  LinearParams attention_head;  // (heads*L*K, d_model)
  LinearParams output;          // (out_channels, d_model)

  // Offset head starts at zero weights with a radial bias: point k of head m
  // sits one pixel from the reference point at angle 2*pi*k/K + pi*m/M.
  // Attention head starts at zero (uniform weights).
  static CshaWeights make(const CshaConfig& config, Rng& rng);

  void collect(ParamSlots& out, std::string_view prefix);
};

// Normalized pixel-center reference point per stride-16 pixel, row-major.
struct ReferenceGrid {
  int height = 0;
  int width = 0;
  std::vector<std::array<Real, 2>> points;  // (x, y) in (0, 1)^2
};

ReferenceGrid reference_points(int height, int width);

// Continuous pixel coordinate on a level of the given extent for a normalized
// reference coordinate. Pixel i is centered at coordinate i.
inline Real level_coordinate(Real normalized, int extent) {
  return normalized * static_cast<Real>(extent) - Real(0.5);
}

// Per-query sampling offsets and attention weights.
struct SamplingPlan {
  int batch = 0;
  int queries = 0;
  int heads = 0;
  int points = 0;
  std::vector<Real> offsets;    // (b, q, m, l, k, 2) level-local pixels
  std::vector<Real> attention;  // (b, q, m, l, k), simplex per (b, q, m)

  std::size_t index(int b, int q, int m, int l, int k) const {
    return (((static_cast<std::size_t>(b) * queries + q) * heads + m) *
                kCshaLevels +
            l) *
               points +
           k;
  }
};

// query_tokens: (batch, H4*W4, d_model), row-major over the grid.
SamplingPlan predict_offsets_weights(const TokenSequence& query_tokens,
                                     const ReferenceGrid& grid,
                                     const CshaWeights& weights);

struct CshaCache {
  std::array<TokenSequence, kCshaLevels> inputs;     // flattened level maps
  std::array<FeatureMap, kCshaLevels> projected;     // d_model channels
  TokenSequence queries;                             // Z
  TokenSequence query_input;                         // [Z, ref]
  ReferenceGrid grid;
  SamplingPlan plan;
  std::vector<Real> locations;  // (b, q, m, l, k, 2) level pixel coords
  std::vector<Real> samples;    // (b, q, m, l, k, head_dim)
  TokenSequence aggregated;     // (b, q, d_model)
  TokenSequence pre_residual;   // (b, q, out_channels)
  int height = 0;
  int width = 0;
};

// Throws GeometryError unless P3 = 2*P4 = 4*P5 in both extents (or all three
// levels are a single pixel) and batch and channel counts agree with the
// weights.
void check_pyramid(const FeatureMap& p3, const FeatureMap& p4,
                   const FeatureMap& p5, const CshaConfig& config);

// Output has P4's shape.
FeatureMap csha_forward(const FeatureMap& p3, const FeatureMap& p4,
                        const FeatureMap& p5, const CshaWeights& weights,
                        CshaCache* cache = nullptr);

// Returns input gradients for (P3, P4, P5).
std::array<FeatureMap, kCshaLevels> csha_backward(const FeatureMap& grad_output,
                                                  const CshaCache& cache,
                                                  CshaWeights& weights);

// Dense equivalent of the sparse sampler: every query assigns an explicit
// weight to every pixel of every level, per head.
struct DenseAttention {
  int batch = 0;
  int queries = 0;
  int heads = 0;
  std::array<int, kCshaLevels> level_offset{};  // first pixel of each level
  int total_pixels = 0;
  std::vector<Real> weights;  // (b, q, m, pixel)

  Real row_sum(int b, int q, int m) const;
};

// Spreads each sparse weight A_mlk over the pixels its bilinear footprint
// touches, evaluated densely at every pixel.
DenseAttention dense_attention_from_weights(const FeatureMap& p3,
                                            const FeatureMap& p4,
                                            const FeatureMap& p5,
                                            const CshaWeights& weights);

// Attends every query to every pixel of all three levels with the given
// dense weights, then applies the same output projection and residual as
// csha_forward.
FeatureMap csha_dense_oracle(const FeatureMap& p3, const FeatureMap& p4,
                             const FeatureMap& p5, const CshaWeights& weights,
                             const DenseAttention& attention);

// Level extents (height, width) for P3, P4, P5.
using PyramidExtents = std::array<std::array<int, 2>, kCshaLevels>;

// Analytic floating-point operation counts of one forward pass.
std::uint64_t csha_sparse_flops(const CshaConfig& config, int batch,
                                const PyramidExtents& extents);
std::uint64_t csha_dense_flops(const CshaConfig& config, int batch,
                               const PyramidExtents& extents);

}  // namespace tinydet

#endif  // TINYDET_CSHA_H_
