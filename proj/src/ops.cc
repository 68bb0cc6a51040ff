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

#include "tinydet/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tinydet {

namespace {

void require_positive_extents(const FeatureMap& x, std::string_view what) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (x.extent(i) <= 0) {
      throw GeometryError(std::string(what) + ": input extent " +
                          std::to_string(i) + " must be positive, got " +
                          shape_string(x));
    }
  }
}

// Range of output indices o for which o*stride - padding + k lies in
// [0, extent).
void valid_range(int out_extent, int extent, int stride, int padding, int k,
                 int* lo, int* hi) {
  // o*stride >= padding - k  and  o*stride <= extent - 1 + padding - k
  const int a = padding - k;
  *lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = extent - 1 + padding - k;
  *hi = b < 0 ? -1 : std::min(out_extent - 1, b / stride);
}

}  // namespace

int strided_extent(int extent, int kernel, int stride, int padding,
                   std::string_view axis) {
  if (stride <= 0) throw ConfigError("stride must be positive");
  if (padding < 0) throw ConfigError("padding must be non-negative");
  if (kernel <= 0) throw ConfigError("kernel extent must be positive");
  const int span = extent + 2 * padding - kernel;
  if (span < 0) {
    throw GeometryError(std::string(axis) + " extent " +
                        std::to_string(extent) + " is smaller than kernel " +
                        std::to_string(kernel) + " after padding");
  }
  if (span % stride != 0) {
    throw GeometryError(std::string(axis) + " extent " +
                        std::to_string(extent) + " with kernel " +
                        std::to_string(kernel) + ", stride " +
                        std::to_string(stride) + ", padding " +
                        std::to_string(padding) +
                        " does not divide exactly");
  }
  return span / stride + 1;
}

FeatureMap conv2d(const FeatureMap& input, const Tensor<4>& kernel,
                  std::span<const Real> bias, int stride, int padding) {
  require_positive_extents(input, "conv2d");
  const int out_c = kernel.extent(0);
  const int in_c = kernel.extent(1);
  const int kh = kernel.extent(2);
  const int kw = kernel.extent(3);
  if (in_c != input.channels()) {
    throw GeometryError("conv2d: kernel expects " + std::to_string(in_c) +
                        " input channels, input has " +
                        std::to_string(input.channels()));
  }
  if (!bias.empty() && static_cast<int>(bias.size()) != out_c) {
    throw GeometryError("conv2d: bias length " + std::to_string(bias.size()) +
                        " != output channels " + std::to_string(out_c));
  }
  const int h = input.height();
  const int w = input.width();
  const int oh = strided_extent(h, kh, stride, padding, "height");
  const int ow = strided_extent(w, kw, stride, padding, "width");
  FeatureMap out({input.batch(), out_c, oh, ow});

  for (int b = 0; b < input.batch(); ++b) {
    for (int oc = 0; oc < out_c; ++oc) {
      Real* dst = out.plane(b, oc);
      if (!bias.empty()) std::fill(dst, dst + out.plane_size(), bias[oc]);
      for (int ic = 0; ic < in_c; ++ic) {
        const Real* src = input.plane(b, ic);
        for (int ky = 0; ky < kh; ++ky) {
          int oy_lo, oy_hi;
          valid_range(oh, h, stride, padding, ky, &oy_lo, &oy_hi);
          for (int kx = 0; kx < kw; ++kx) {
            const Real wv = kernel(oc, ic, ky, kx);
            int ox_lo, ox_hi;
            valid_range(ow, w, stride, padding, kx, &ox_lo, &ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const Real* src_row = src + (oy * stride - padding + ky) * w;
              Real* dst_row = dst + oy * ow;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                dst_row[ox] += wv * src_row[ox * stride - padding + kx];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

FeatureMap conv2d_backward(const FeatureMap& input, const Tensor<4>& kernel,
                           int stride, int padding,
                           const FeatureMap& grad_output,
                           Tensor<4>& grad_kernel, std::span<Real> grad_bias) {
  const int out_c = kernel.extent(0);
  const int in_c = kernel.extent(1);
  const int kh = kernel.extent(2);
  const int kw = kernel.extent(3);
  const int h = input.height();
  const int w = input.width();
  const int oh = grad_output.height();
  const int ow = grad_output.width();
  FeatureMap grad_input(input.extents());

  for (int b = 0; b < input.batch(); ++b) {
    for (int oc = 0; oc < out_c; ++oc) {
      const Real* g = grad_output.plane(b, oc);
      if (!grad_bias.empty()) {
        Real s = 0;
        for (std::size_t i = 0; i < grad_output.plane_size(); ++i) s += g[i];
        grad_bias[oc] += s;
      }
      for (int ic = 0; ic < in_c; ++ic) {
        const Real* src = input.plane(b, ic);
        Real* gsrc = grad_input.plane(b, ic);
        for (int ky = 0; ky < kh; ++ky) {
          int oy_lo, oy_hi;
          valid_range(oh, h, stride, padding, ky, &oy_lo, &oy_hi);
          for (int kx = 0; kx < kw; ++kx) {
            const Real wv = kernel(oc, ic, ky, kx);
            int ox_lo, ox_hi;
            valid_range(ow, w, stride, padding, kx, &ox_lo, &ox_hi);
            Real gw = 0;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int row = (oy * stride - padding + ky) * w;
              const Real* g_row = g + oy * ow;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                const int idx = row + ox * stride - padding + kx;
                gw += g_row[ox] * src[idx];
                gsrc[idx] += g_row[ox] * wv;
              }
            }
            grad_kernel(oc, ic, ky, kx) += gw;
          }
        }
      }
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(int channels)
    : gamma({channels}),
      beta({channels}),
      running_mean({channels}, Real(0)),
      running_var({channels}, Real(1)) {
  gamma.value.fill(Real(1));
}

void BatchNorm::collect(ParamSlots& out, std::string_view prefix) {
  add_slot(out, prefix, "gamma", gamma);
  add_slot(out, prefix, "beta", beta);
  add_buffer(out, prefix, "running_mean", running_mean);
  add_buffer(out, prefix, "running_var", running_var);
}

FeatureMap batch_norm(const FeatureMap& input, BatchNorm& bn, Mode mode,
                      BatchNormCache* cache) {
  require_positive_extents(input, "batch_norm");
  if (!(bn.epsilon > 0)) throw ConfigError("batch_norm: epsilon must be > 0");
  const int channels = input.channels();
  if (bn.channels() != channels) {
    throw GeometryError("batch_norm: parameters sized for " +
                        std::to_string(bn.channels()) + " channels, input has " +
                        std::to_string(channels));
  }
  const std::size_t plane = input.plane_size();
  const std::size_t count = plane * static_cast<std::size_t>(input.batch());

  std::vector<Real> mean(channels), var(channels), inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    if (mode == Mode::kTrain) {
      Real s = 0;
      for (int b = 0; b < input.batch(); ++b) {
        const Real* p = input.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const Real m = s / static_cast<Real>(count);
      Real v = 0;
      for (int b = 0; b < input.batch(); ++b) {
        const Real* p = input.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      mean[c] = m;
      var[c] = v / static_cast<Real>(count);
    } else {
      mean[c] = bn.running_mean[c];
      var[c] = bn.running_var[c];
    }
    inv_std[c] = Real(1) / std::sqrt(var[c] + bn.epsilon);
  }

  FeatureMap out(input.extents());
  FeatureMap normalized;
  if (cache) normalized = FeatureMap(input.extents());
  for (int b = 0; b < input.batch(); ++b) {
    for (int c = 0; c < channels; ++c) {
      const Real* src = input.plane(b, c);
      Real* dst = out.plane(b, c);
      const Real g = bn.gamma.value[c];
      const Real be = bn.beta.value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const Real xhat = (src[i] - mean[c]) * inv_std[c];
        if (cache) normalized.plane(b, c)[i] = xhat;
        dst[i] = g * xhat + be;
      }
    }
  }

  if (mode == Mode::kTrain) {
    const Real unbias =
        count > 1 ? static_cast<Real>(count) / static_cast<Real>(count - 1)
                  : Real(1);
    for (int c = 0; c < channels; ++c) {
      bn.running_mean[c] =
          (1 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean[c];
      bn.running_var[c] =
          (1 - bn.momentum) * bn.running_var[c] + bn.momentum * var[c] * unbias;
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

FeatureMap batch_norm_backward(const FeatureMap& grad_output,
                               const BatchNormCache& cache, BatchNorm& bn) {
  const FeatureMap& xhat = cache.normalized;
  const int channels = grad_output.channels();
  const std::size_t plane = grad_output.plane_size();
  const Real n = static_cast<Real>(plane * grad_output.batch());
  FeatureMap grad_input(grad_output.extents());

  for (int c = 0; c < channels; ++c) {
    Real sum_g = 0, sum_gx = 0;
    for (int b = 0; b < grad_output.batch(); ++b) {
      const Real* g = grad_output.plane(b, c);
      const Real* xh = xhat.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    bn.gamma.grad[c] += sum_gx;
    bn.beta.grad[c] += sum_g;
    const Real scale = bn.gamma.value[c] * cache.inv_std[c];
    for (int b = 0; b < grad_output.batch(); ++b) {
      const Real* g = grad_output.plane(b, c);
      const Real* xh = xhat.plane(b, c);
      Real* dst = grad_input.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        if (cache.mode == Mode::kTrain) {
          dst[i] = scale * (g[i] - sum_g / n - xh[i] * sum_gx / n);
        } else {
          dst[i] = scale * g[i];
        }
      }
    }
  }
  return grad_input;
}

FeatureMap batch_norm_inverse(const FeatureMap& output, const BatchNorm& bn,
                              std::span<const Real> mean,
                              std::span<const Real> var) {
  FeatureMap x(output.extents());
  for (int b = 0; b < output.batch(); ++b) {
    for (int c = 0; c < output.channels(); ++c) {
      const Real std_dev = std::sqrt(var[c] + bn.epsilon);
      const Real* src = output.plane(b, c);
      Real* dst = x.plane(b, c);
      for (std::size_t i = 0; i < output.plane_size(); ++i) {
        dst[i] = (src[i] - bn.beta.value[c]) / bn.gamma.value[c] * std_dev +
                 mean[c];
      }
    }
  }
  return x;
}

LayerNorm::LayerNorm(int channels) : gamma({channels}), beta({channels}) {
  gamma.value.fill(Real(1));
}

void LayerNorm::collect(ParamSlots& out, std::string_view prefix) {
  add_slot(out, prefix, "gamma", gamma);
  add_slot(out, prefix, "beta", beta);
}

TokenSequence layer_norm(const TokenSequence& input, const LayerNorm& ln,
                         LayerNormCache* cache) {
  if (!(ln.epsilon > 0)) throw ConfigError("layer_norm: epsilon must be > 0");
  const int channels = input.features();
  if (ln.gamma.value.extent(0) != channels) {
    throw GeometryError("layer_norm: parameters sized for " +
                        std::to_string(ln.gamma.value.extent(0)) +
                        " channels, input has " + std::to_string(channels));
  }
  TokenSequence out(input.extents());
  if (cache) {
    cache->normalized = TokenSequence(input.extents());
    cache->inv_std.assign(
        static_cast<std::size_t>(input.extent(0)) * input.tokens(), Real(0));
  }
  for (int b = 0; b < input.extent(0); ++b) {
    for (int t = 0; t < input.tokens(); ++t) {
      const Real* src = input.row(b, t);
      Real m = 0;
      for (int c = 0; c < channels; ++c) m += src[c];
      m /= channels;
      Real v = 0;
      for (int c = 0; c < channels; ++c) v += (src[c] - m) * (src[c] - m);
      v /= channels;
      const Real inv = Real(1) / std::sqrt(v + ln.epsilon);
      Real* dst = out.row(b, t);
      for (int c = 0; c < channels; ++c) {
        const Real xhat = (src[c] - m) * inv;
        if (cache) cache->normalized.row(b, t)[c] = xhat;
        dst[c] = ln.gamma.value[c] * xhat + ln.beta.value[c];
      }
      if (cache) {
        cache->inv_std[static_cast<std::size_t>(b) * input.tokens() + t] = inv;
      }
    }
  }
  return out;
}

TokenSequence layer_norm_backward(const TokenSequence& grad_output,
                                  const LayerNormCache& cache, LayerNorm& ln) {
  const int channels = grad_output.features();
  const Real n = static_cast<Real>(channels);
  TokenSequence grad_input(grad_output.extents());
  std::vector<Real> gh(channels);
  for (int b = 0; b < grad_output.extent(0); ++b) {
    for (int t = 0; t < grad_output.tokens(); ++t) {
      const Real* g = grad_output.row(b, t);
      const Real* xh = cache.normalized.row(b, t);
      Real sum_g = 0, sum_gx = 0;
      for (int c = 0; c < channels; ++c) {
        ln.gamma.grad[c] += g[c] * xh[c];
        ln.beta.grad[c] += g[c];
        gh[c] = g[c] * ln.gamma.value[c];
        sum_g += gh[c];
        sum_gx += gh[c] * xh[c];
      }
      const Real inv =
          cache.inv_std[static_cast<std::size_t>(b) * grad_output.tokens() + t];
      Real* dst = grad_input.row(b, t);
      for (int c = 0; c < channels; ++c) {
        dst[c] = inv * (gh[c] - sum_g / n - xh[c] * sum_gx / n);
      }
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------

TokenSequence linear(const TokenSequence& input, const Matrix& weights,
                     std::span<const Real> bias) {
  const int out_f = weights.extent(0);
  const int in_f = weights.extent(1);
  if (input.features() != in_f) {
    throw GeometryError("linear: weights expect " + std::to_string(in_f) +
                        " input features, input has " +
                        std::to_string(input.features()));
  }
  if (!bias.empty() && static_cast<int>(bias.size()) != out_f) {
    throw GeometryError("linear: bias length mismatch");
  }
  TokenSequence out({input.extent(0), input.tokens(), out_f});
  for (int b = 0; b < input.extent(0); ++b) {
    for (int t = 0; t < input.tokens(); ++t) {
      const Real* x = input.row(b, t);
      Real* y = out.row(b, t);
      for (int o = 0; o < out_f; ++o) {
        const Real* w = weights.data() + static_cast<std::size_t>(o) * in_f;
        Real s = bias.empty() ? Real(0) : bias[o];
        for (int i = 0; i < in_f; ++i) s += w[i] * x[i];
        y[o] = s;
      }
    }
  }
  return out;
}

TokenSequence linear_backward(const TokenSequence& input,
                              const Matrix& weights,
                              const TokenSequence& grad_output,
                              Matrix& grad_weights,
                              std::span<Real> grad_bias) {
  const int out_f = weights.extent(0);
  const int in_f = weights.extent(1);
  TokenSequence grad_input(input.extents());
  for (int b = 0; b < input.extent(0); ++b) {
    for (int t = 0; t < input.tokens(); ++t) {
      const Real* x = input.row(b, t);
      const Real* g = grad_output.row(b, t);
      Real* gx = grad_input.row(b, t);
      for (int o = 0; o < out_f; ++o) {
        if (g[o] == Real(0)) continue;
        const Real* w = weights.data() + static_cast<std::size_t>(o) * in_f;
        Real* gw = grad_weights.data() + static_cast<std::size_t>(o) * in_f;
        for (int i = 0; i < in_f; ++i) {
          gw[i] += g[o] * x[i];
          gx[i] += g[o] * w[i];
        }
        if (!grad_bias.empty()) grad_bias[o] += g[o];
      }
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.begin(), logits.end());
  softmax_rows(out, out.size());
  return out;
}

void softmax_rows(std::span<Real> values, std::size_t row_length) {
  if (row_length == 0) return;
  for (std::size_t start = 0; start + row_length <= values.size();
       start += row_length) {
    Real* row = values.data() + start;
    Real mx = row[0];
    for (std::size_t i = 1; i < row_length; ++i) mx = std::max(mx, row[i]);
    Real sum = 0;
    for (std::size_t i = 0; i < row_length; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    for (std::size_t i = 0; i < row_length; ++i) row[i] /= sum;
  }
}

std::vector<Real> softmax_backward(std::span<const Real> probs,
                                   std::span<const Real> grad_output) {
  Real inner = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    inner += probs[i] * grad_output[i];
  }
  std::vector<Real> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = probs[i] * (grad_output[i] - inner);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct BilinearCorners {
  int x0 = 0, y0 = 0;
  Real fx = 0, fy = 0;
  bool any = false;
};

BilinearCorners locate(Real x, Real y, int width, int height) {
  BilinearCorners c;
  // Anything at or beyond one pixel outside the map touches no valid corner.
  if (!(x > Real(-1)) || !(x < Real(width)) || !(y > Real(-1)) ||
      !(y < Real(height))) {
    return c;
  }
  const Real xf = std::floor(x);
  const Real yf = std::floor(y);
  c.x0 = static_cast<int>(xf);
  c.y0 = static_cast<int>(yf);
  c.fx = x - xf;
  c.fy = y - yf;
  c.any = true;
  return c;
}

}  // namespace

void bilinear_gather(const FeatureMap& map, int b, int c_begin, int count,
                     Real x, Real y, Real* out) {
  std::fill(out, out + count, Real(0));
  const int w = map.width();
  const int h = map.height();
  const BilinearCorners k = locate(x, y, w, h);
  if (!k.any) return;
  const Real wts[4] = {(1 - k.fx) * (1 - k.fy), k.fx * (1 - k.fy),
                       (1 - k.fx) * k.fy, k.fx * k.fy};
  const int xs[4] = {k.x0, k.x0 + 1, k.x0, k.x0 + 1};
  const int ys[4] = {k.y0, k.y0, k.y0 + 1, k.y0 + 1};
  for (int corner = 0; corner < 4; ++corner) {
    if (xs[corner] < 0 || xs[corner] >= w || ys[corner] < 0 ||
        ys[corner] >= h || wts[corner] == Real(0)) {
      continue;
    }
    const std::size_t pix = static_cast<std::size_t>(ys[corner]) * w + xs[corner];
    for (int c = 0; c < count; ++c) {
      out[c] += wts[corner] * map.plane(b, c_begin + c)[pix];
    }
  }
}

void bilinear_scatter(const FeatureMap& map, int b, int c_begin, int count,
                      Real x, Real y, const Real* grad, FeatureMap& grad_map,
                      Real* grad_x, Real* grad_y) {
  *grad_x = 0;
  *grad_y = 0;
  const int w = map.width();
  const int h = map.height();
  const BilinearCorners k = locate(x, y, w, h);
  if (!k.any) return;
  const Real wts[4] = {(1 - k.fx) * (1 - k.fy), k.fx * (1 - k.fy),
                       (1 - k.fx) * k.fy, k.fx * k.fy};
  const Real dwx[4] = {-(1 - k.fy), (1 - k.fy), -k.fy, k.fy};
  const Real dwy[4] = {-(1 - k.fx), -k.fx, (1 - k.fx), k.fx};
  const int xs[4] = {k.x0, k.x0 + 1, k.x0, k.x0 + 1};
  const int ys[4] = {k.y0, k.y0, k.y0 + 1, k.y0 + 1};
  for (int corner = 0; corner < 4; ++corner) {
    if (xs[corner] < 0 || xs[corner] >= w || ys[corner] < 0 ||
        ys[corner] >= h) {
      continue;
    }
    const std::size_t pix = static_cast<std::size_t>(ys[corner]) * w + xs[corner];
    Real inner = 0;
    for (int c = 0; c < count; ++c) {
      inner += grad[c] * map.plane(b, c_begin + c)[pix];
      grad_map.plane(b, c_begin + c)[pix] += wts[corner] * grad[c];
    }
    *grad_x += dwx[corner] * inner;
    *grad_y += dwy[corner] * inner;
  }
}

TokenSequence bilinear_sample(const FeatureMap& map, const Tensor<3>& points) {
  if (points.extent(0) != map.batch() || points.extent(2) != 2) {
    throw GeometryError("bilinear_sample: points must be (batch, n, 2), got " +
                        shape_string(points));
  }
  const int n = points.extent(1);
  TokenSequence out({map.batch(), n, map.channels()});
  for (int b = 0; b < map.batch(); ++b) {
    for (int i = 0; i < n; ++i) {
      bilinear_gather(map, b, 0, map.channels(), points(b, i, 0),
                      points(b, i, 1), out.row(b, i));
    }
  }
  return out;
}

void bilinear_sample_backward(const FeatureMap& map, const Tensor<3>& points,
                              const TokenSequence& grad_output,
                              FeatureMap& grad_map, Tensor<3>& grad_points) {
  for (int b = 0; b < map.batch(); ++b) {
    for (int i = 0; i < points.extent(1); ++i) {
      Real gx = 0, gy = 0;
      bilinear_scatter(map, b, 0, map.channels(), points(b, i, 0),
                       points(b, i, 1), grad_output.row(b, i), grad_map, &gx,
                       &gy);
      grad_points(b, i, 0) += gx;
      grad_points(b, i, 1) += gy;
    }
  }
}

// ---------------------------------------------------------------------------

FeatureMap max_pool(const FeatureMap& input, int kernel, int stride,
                    int padding, std::vector<std::size_t>* argmax) {
  require_positive_extents(input, "max_pool");
  const int h = input.height();
  const int w = input.width();
  const int oh = strided_extent(h, kernel, stride, padding, "height");
  const int ow = strided_extent(w, kernel, stride, padding, "width");
  FeatureMap out({input.batch(), input.channels(), oh, ow});
  if (argmax) argmax->assign(out.size(), std::numeric_limits<std::size_t>::max());
  std::size_t o = 0;
  for (int b = 0; b < input.batch(); ++b) {
    for (int c = 0; c < input.channels(); ++c) {
      const Real* src = input.plane(b, c);
      const std::size_t base =
          (static_cast<std::size_t>(b) * input.channels() + c) *
          input.plane_size();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          Real best = -std::numeric_limits<Real>::infinity();
          std::size_t best_idx = std::numeric_limits<std::size_t>::max();
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= w) continue;
              const Real v = src[iy * w + ix];
              if (v > best || best_idx == std::numeric_limits<std::size_t>::max()) {
                best = v;
                best_idx = base + static_cast<std::size_t>(iy) * w + ix;
              }
            }
          }
          out[o] = best_idx == std::numeric_limits<std::size_t>::max() ? Real(0)
                                                                       : best;
          if (argmax) (*argmax)[o] = best_idx;
        }
      }
    }
  }
  return out;
}

FeatureMap max_pool_backward(const FeatureMap::Extents& input_extents,
                             std::span<const std::size_t> argmax,
                             const FeatureMap& grad_output) {
  FeatureMap grad_input(input_extents);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] != std::numeric_limits<std::size_t>::max()) {
      grad_input[argmax[o]] += grad_output[o];
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------

void sgd_step(std::span<Real> weights, std::span<const Real> gradients,
              Real lr, Real weight_decay) {
  if (lr < 0) throw ConfigError("sgd_step: learning rate must be >= 0");
  if (weight_decay < 0) {
    throw ConfigError("sgd_step: weight decay must be >= 0");
  }
  if (weights.size() != gradients.size()) {
    throw GeometryError("sgd_step: weight/gradient size mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] -= lr * (gradients[i] + weight_decay * weights[i]);
  }
}

void sgd_step(const ParamSlots& slots, Real lr, Real weight_decay) {
  for (const ParamSlot& s : slots) {
    if (s.trainable) sgd_step(s.value, s.grad, lr, weight_decay);
  }
}

// ---------------------------------------------------------------------------

void add_inplace(FeatureMap& target, const FeatureMap& other) {
  if (!target.same_shape(other)) {
    throw GeometryError("add: shape " + shape_string(target) + " vs " +
                        shape_string(other));
  }
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += other[i];
}

FeatureMap add(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out = a;
  add_inplace(out, b);
  return out;
}

FeatureMap concat_channels(std::span<const FeatureMap* const> parts) {
  if (parts.empty()) throw GeometryError("concat_channels: no inputs");
  const FeatureMap& first = *parts.front();
  int channels = 0;
  for (const FeatureMap* p : parts) {
    if (p->batch() != first.batch() || p->height() != first.height() ||
        p->width() != first.width()) {
      throw GeometryError("concat_channels: mismatched extents " +
                          shape_string(*p) + " vs " + shape_string(first));
    }
    channels += p->channels();
  }
  FeatureMap out({first.batch(), channels, first.height(), first.width()});
  const std::size_t plane = first.plane_size();
  for (int b = 0; b < first.batch(); ++b) {
    int offset = 0;
    for (const FeatureMap* p : parts) {
      for (int c = 0; c < p->channels(); ++c) {
        std::copy_n(p->plane(b, c), plane, out.plane(b, offset + c));
      }
      offset += p->channels();
    }
  }
  return out;
}

std::vector<FeatureMap> split_channels(const FeatureMap& input,
                                       std::span<const int> sizes) {
  int total = 0;
  for (int s : sizes) total += s;
  if (total != input.channels()) {
    throw GeometryError("split_channels: sizes sum to " +
                        std::to_string(total) + ", input has " +
                        std::to_string(input.channels()));
  }
  std::vector<FeatureMap> out;
  const std::size_t plane = input.plane_size();
  int offset = 0;
  for (int s : sizes) {
    FeatureMap part({input.batch(), s, input.height(), input.width()});
    for (int b = 0; b < input.batch(); ++b) {
      for (int c = 0; c < s; ++c) {
        std::copy_n(input.plane(b, offset + c), plane, part.plane(b, c));
      }
    }
    offset += s;
    out.push_back(std::move(part));
  }
  return out;
}

FeatureMap upsample_nearest2x(const FeatureMap& input) {
  FeatureMap out(
      {input.batch(), input.channels(), input.height() * 2, input.width() * 2});
  for (int b = 0; b < input.batch(); ++b) {
    for (int c = 0; c < input.channels(); ++c) {
      for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
          out(b, c, y, x) = input(b, c, y / 2, x / 2);
        }
      }
    }
  }
  return out;
}

FeatureMap upsample_nearest2x_backward(const FeatureMap& grad_output) {
  FeatureMap grad({grad_output.batch(), grad_output.channels(),
                   grad_output.height() / 2, grad_output.width() / 2});
  for (int b = 0; b < grad_output.batch(); ++b) {
    for (int c = 0; c < grad_output.channels(); ++c) {
      for (int y = 0; y < grad_output.height(); ++y) {
        for (int x = 0; x < grad_output.width(); ++x) {
          grad(b, c, y / 2, x / 2) += grad_output(b, c, y, x);
        }
      }
    }
  }
  return grad;
}

FeatureMap pixel_unshuffle(const FeatureMap& input) {
  if (input.height() % 2 != 0) {
    throw GeometryError("pixel_unshuffle: odd height " +
                        std::to_string(input.height()));
  }
  if (input.width() % 2 != 0) {
    throw GeometryError("pixel_unshuffle: odd width " +
                        std::to_string(input.width()));
  }
  const int c_in = input.channels();
  const int oh = input.height() / 2;
  const int ow = input.width() / 2;
  FeatureMap out({input.batch(), 4 * c_in, oh, ow});
  constexpr int kDy[4] = {0, 1, 0, 1};
  constexpr int kDx[4] = {0, 0, 1, 1};
  for (int b = 0; b < input.batch(); ++b) {
    for (int g = 0; g < 4; ++g) {
      for (int c = 0; c < c_in; ++c) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            out(b, g * c_in + c, y, x) =
                input(b, c, 2 * y + kDy[g], 2 * x + kDx[g]);
          }
        }
      }
    }
  }
  return out;
}

FeatureMap pixel_shuffle(const FeatureMap& input) {
  const int c_out = input.channels() / 4;
  FeatureMap out(
      {input.batch(), c_out, input.height() * 2, input.width() * 2});
  constexpr int kDy[4] = {0, 1, 0, 1};
  constexpr int kDx[4] = {0, 0, 1, 1};
  for (int b = 0; b < input.batch(); ++b) {
    for (int g = 0; g < 4; ++g) {
      for (int c = 0; c < c_out; ++c) {
        for (int y = 0; y < input.height(); ++y) {
          for (int x = 0; x < input.width(); ++x) {
            out(b, c, 2 * y + kDy[g], 2 * x + kDx[g]) =
                input(b, g * c_out + c, y, x);
          }
        }
      }
    }
  }
  return out;
}

TokenSequence flatten_tokens(const FeatureMap& input) {
  const int hw = input.height() * input.width();
  TokenSequence out({input.batch(), hw, input.channels()});
  for (int b = 0; b < input.batch(); ++b) {
    for (int c = 0; c < input.channels(); ++c) {
      const Real* src = input.plane(b, c);
      for (int t = 0; t < hw; ++t) out.row(b, t)[c] = src[t];
    }
  }
  return out;
}

FeatureMap unflatten_tokens(const TokenSequence& tokens, int height,
                            int width) {
  if (tokens.tokens() != height * width) {
    throw GeometryError("unflatten_tokens: " + std::to_string(tokens.tokens()) +
                        " tokens cannot fill " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  FeatureMap out({tokens.extent(0), tokens.features(), height, width});
  for (int b = 0; b < tokens.extent(0); ++b) {
    for (int c = 0; c < tokens.features(); ++c) {
      Real* dst = out.plane(b, c);
      for (int t = 0; t < height * width; ++t) dst[t] = tokens.row(b, t)[c];
    }
  }
  return out;
}

}  // namespace tinydet
