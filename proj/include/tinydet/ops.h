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

// Differentiable primitives. Every forward has a matching *_backward that
// returns the input gradient and accumulates (+=) parameter gradients into
// caller-owned buffers.

#ifndef TINYDET_OPS_H_
#define TINYDET_OPS_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tinydet/params.h"
#include "tinydet/tensor.h"

namespace tinydet {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip).
// kernel extents: (out_channels, in_channels, kernel_h, kernel_w).
// ---------------------------------------------------------------------------

// Output extent of a strided window; throws GeometryError unless
// (extent + 2*padding - kernel) is a non-negative multiple of stride.
int strided_extent(int extent, int kernel, int stride, int padding,
                   std::string_view axis);

FeatureMap conv2d(const FeatureMap& input, const Tensor<4>& kernel,
                  std::span<const Real> bias, int stride, int padding);

FeatureMap conv2d_backward(const FeatureMap& input, const Tensor<4>& kernel,
                           int stride, int padding,
                           const FeatureMap& grad_output,
                           Tensor<4>& grad_kernel, std::span<Real> grad_bias);

// ---------------------------------------------------------------------------
// Normalization.
// ---------------------------------------------------------------------------

struct BatchNorm {
  Param<1> gamma;
  Param<1> beta;
  Vector running_mean;
  Vector running_var;
  Real epsilon = Real(1e-5);
  Real momentum = Real(0.1);

  BatchNorm() = default;
  explicit BatchNorm(int channels);

  int channels() const { return gamma.value.extent(0); }
  void collect(ParamSlots& out, std::string_view prefix);
};

struct BatchNormCache {
  Mode mode = Mode::kInfer;
  FeatureMap normalized;
  std::vector<Real> mean;
  std::vector<Real> var;
  std::vector<Real> inv_std;
};

// Training mode standardizes with batch statistics and folds them into the
// running statistics; inference mode uses the running statistics.
FeatureMap batch_norm(const FeatureMap& input, BatchNorm& bn, Mode mode,
                      BatchNormCache* cache = nullptr);

FeatureMap batch_norm_backward(const FeatureMap& grad_output,
                               const BatchNormCache& cache, BatchNorm& bn);

// Undoes the affine map and standardization given the statistics used.
FeatureMap batch_norm_inverse(const FeatureMap& output, const BatchNorm& bn,
                              std::span<const Real> mean,
                              std::span<const Real> var);

struct LayerNorm {
  Param<1> gamma;
  Param<1> beta;
  Real epsilon = Real(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(int channels);

  void collect(ParamSlots& out, std::string_view prefix);
};

struct LayerNormCache {
  TokenSequence normalized;
  std::vector<Real> inv_std;  // one per (batch, token)
};

// Normalizes each token over its channel axis.
TokenSequence layer_norm(const TokenSequence& input, const LayerNorm& ln,
                         LayerNormCache* cache = nullptr);

TokenSequence layer_norm_backward(const TokenSequence& grad_output,
                                  const LayerNormCache& cache, LayerNorm& ln);

// ---------------------------------------------------------------------------
// Elementwise.
// ---------------------------------------------------------------------------

inline Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

inline Real silu(Real x) { return x * sigmoid(x); }

inline Real silu_derivative(Real x) {
  const Real s = sigmoid(x);
  return s * (Real(1) + x * (Real(1) - s));
}

template <std::size_t R>
Tensor<R> silu(const Tensor<R>& input) {
  Tensor<R> out(input.extents());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = silu(input[i]);
  return out;
}

template <std::size_t R>
Tensor<R> silu_backward(const Tensor<R>& input, const Tensor<R>& grad_output) {
  Tensor<R> out(input.extents());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = grad_output[i] * silu_derivative(input[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token-wise affine map. weights extents: (out_features, in_features).
// ---------------------------------------------------------------------------

TokenSequence linear(const TokenSequence& input, const Matrix& weights,
                     std::span<const Real> bias);

TokenSequence linear_backward(const TokenSequence& input,
                              const Matrix& weights,
                              const TokenSequence& grad_output,
                              Matrix& grad_weights, std::span<Real> grad_bias);

// ---------------------------------------------------------------------------
// Softmax over contiguous rows, max-subtracted.
// ---------------------------------------------------------------------------

std::vector<Real> softmax(std::span<const Real> logits);

// Applies softmax independently to each consecutive run of row_length values.
void softmax_rows(std::span<Real> values, std::size_t row_length);

// Gradient w.r.t. logits given probabilities p and upstream gradient g:
// p * (g - <g, p>).
std::vector<Real> softmax_backward(std::span<const Real> probs,
                                   std::span<const Real> grad_output);

// ---------------------------------------------------------------------------
// Bilinear sampling with zero padding. Coordinates are continuous pixel
// indices: (x, y) = (2, 3) is exactly the value stored at column 2, row 3.
// ---------------------------------------------------------------------------

// points extents: (batch, n, 2) holding (x, y); output (batch, n, channels).
TokenSequence bilinear_sample(const FeatureMap& map, const Tensor<3>& points);

// Accumulates into grad_map (shape of map) and grad_points (shape of points).
void bilinear_sample_backward(const FeatureMap& map, const Tensor<3>& points,
                              const TokenSequence& grad_output,
                              FeatureMap& grad_map, Tensor<3>& grad_points);

// Samples channels [c_begin, c_begin + count) of batch b at (x, y) into out.
void bilinear_gather(const FeatureMap& map, int b, int c_begin, int count,
                     Real x, Real y, Real* out);

// Adjoint of bilinear_gather. Adds the map gradient into grad_map and returns
// d<grad, sample>/d(x, y) through grad_x, grad_y.
void bilinear_scatter(const FeatureMap& map, int b, int c_begin, int count,
                      Real x, Real y, const Real* grad, FeatureMap& grad_map,
                      Real* grad_x, Real* grad_y);

// ---------------------------------------------------------------------------
// Max pooling; padded cells never win.
// ---------------------------------------------------------------------------

FeatureMap max_pool(const FeatureMap& input, int kernel, int stride,
                    int padding, std::vector<std::size_t>* argmax = nullptr);

FeatureMap max_pool_backward(const FeatureMap::Extents& input_extents,
                             std::span<const std::size_t> argmax,
                             const FeatureMap& grad_output);

// ---------------------------------------------------------------------------
// Optimizer. w <- w - lr * (g + weight_decay * w).
// ---------------------------------------------------------------------------

void sgd_step(std::span<Real> weights, std::span<const Real> gradients,
              Real lr, Real weight_decay);

// Updates every trainable slot; buffers are left untouched.
void sgd_step(const ParamSlots& slots, Real lr, Real weight_decay);

// ---------------------------------------------------------------------------
// Structural helpers.
// ---------------------------------------------------------------------------

void add_inplace(FeatureMap& target, const FeatureMap& other);
FeatureMap add(const FeatureMap& a, const FeatureMap& b);

FeatureMap concat_channels(std::span<const FeatureMap* const> parts);
std::vector<FeatureMap> split_channels(const FeatureMap& input,
                                       std::span<const int> sizes);

FeatureMap upsample_nearest2x(const FeatureMap& input);
FeatureMap upsample_nearest2x_backward(const FeatureMap& grad_output);

// 2x2 space-to-depth. Output channel g*C + c holds group g of channel c, with
// groups ordered (top-left, bottom-left, top-right, bottom-right).
FeatureMap pixel_unshuffle(const FeatureMap& input);
FeatureMap pixel_shuffle(const FeatureMap& input);

// Row-major (y, then x) flatten to (batch, h*w, channels), and its inverse.
TokenSequence flatten_tokens(const FeatureMap& input);
FeatureMap unflatten_tokens(const TokenSequence& tokens, int height,
                            int width);

// Sum of elementwise products; the scalar objective used by gradient checks.
template <std::size_t R>
Real dot(const Tensor<R>& a, const Tensor<R>& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace tinydet

#endif  // TINYDET_OPS_H_
