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

#include "tinydet/csha.h"

#include <cmath>
#include <numbers>
#include <string>

namespace tinydet {

namespace {

constexpr int kQueryLevel = 1;  // index of P4 within (P3, P4, P5)

FeatureMap project_level(const TokenSequence& flat, const LinearParams& proj,
                         int height, int width) {
  return unflatten_tokens(
      linear(flat, proj.weight.value, proj.bias.value.values()), height,
      width);
}

// Appends the normalized reference coordinates to every query token.
TokenSequence with_reference(const TokenSequence& queries,
                             const ReferenceGrid& grid) {
  const int d = queries.features();
  TokenSequence out({queries.extent(0), queries.tokens(), d + 2});
  for (int b = 0; b < queries.extent(0); ++b) {
    for (int q = 0; q < queries.tokens(); ++q) {
      const Real* src = queries.row(b, q);
      Real* dst = out.row(b, q);
      std::copy_n(src, d, dst);
      dst[d] = grid.points[q][0];
      dst[d + 1] = grid.points[q][1];
    }
  }
  return out;
}

Real tent(Real t) { return std::max(Real(0), Real(1) - std::abs(t)); }

}  // namespace

void CshaConfig::validate() const {
  if (heads <= 0 || points <= 0) {
    throw ConfigError("csha: heads and points must be positive");
  }
  if (d_model <= 0 || d_model % heads != 0) {
    throw ConfigError("csha: d_model " + std::to_string(d_model) +
                      " not divisible by head count " + std::to_string(heads));
  }
  if (out_channels != d_model) {
    throw ConfigError("csha: residual requires out_channels (" +
                      std::to_string(out_channels) + ") == d_model (" +
                      std::to_string(d_model) + ")");
  }
  if (in_channels[1] != out_channels) {
    throw ConfigError("csha: output must keep P4's " +
                      std::to_string(in_channels[1]) + " channels, got " +
                      std::to_string(out_channels));
  }
  for (int c : in_channels) {
    if (c <= 0) throw ConfigError("csha: level channels must be positive");
  }
}

CshaWeights CshaWeights::make(const CshaConfig& config, Rng& rng) {
  config.validate();
  CshaWeights w;
  w.config = config;
  const int mlk = config.heads * kCshaLevels * config.points;
  for (int l = 0; l < kCshaLevels; ++l) {
    w.level_proj[l] = LinearParams(config.in_channels[l], config.d_model);
    w.level_proj[l].init(rng);
  }
  w.offset_head = LinearParams(config.d_model + 2, mlk * 2);
  w.attention_head = LinearParams(config.d_model, mlk);
  w.output = LinearParams(config.d_model, config.out_channels);
  w.output.init(rng);

  auto& bias = w.offset_head.bias.value;
  for (int m = 0; m < config.heads; ++m) {
    for (int l = 0; l < kCshaLevels; ++l) {
      for (int k = 0; k < config.points; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / config.points +
                             std::numbers::pi * m / config.heads;
        const int i = ((m * kCshaLevels + l) * config.points + k) * 2;
        bias[i] = static_cast<Real>(std::cos(angle));
        bias[i + 1] = static_cast<Real>(std::sin(angle));
      }
    }
  }
  return w;
}

void CshaWeights::collect(ParamSlots& out, std::string_view prefix) {
  const std::string p(prefix);
  for (int l = 0; l < kCshaLevels; ++l) {
    level_proj[l].collect(out, p + "proj_p" + std::to_string(l + 3) + ".");
  }
  offset_head.collect(out, p + "offset.");
  attention_head.collect(out, p + "attention.");
  output.collect(out, p + "output.");
}

ReferenceGrid reference_points(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw GeometryError("reference_points: extents must be positive");
  }
  ReferenceGrid grid{height, width, {}};
  grid.points.reserve(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      grid.points.push_back({(static_cast<Real>(x) + Real(0.5)) / width,
                             (static_cast<Real>(y) + Real(0.5)) / height});
    }
  }
  return grid;
}

SamplingPlan predict_offsets_weights(const TokenSequence& query_tokens,
                                     const ReferenceGrid& grid,
                                     const CshaWeights& weights) {
  const CshaConfig& cfg = weights.config;
  if (query_tokens.features() != cfg.d_model) {
    throw GeometryError("csha: query tokens have " +
                        std::to_string(query_tokens.features()) +
                        " features, expected d_model " +
                        std::to_string(cfg.d_model));
  }
  if (static_cast<std::size_t>(query_tokens.tokens()) != grid.points.size()) {
    throw GeometryError("csha: query count does not match reference grid");
  }
  SamplingPlan plan;
  plan.batch = query_tokens.extent(0);
  plan.queries = query_tokens.tokens();
  plan.heads = cfg.heads;
  plan.points = cfg.points;

  const TokenSequence offsets =
      linear(with_reference(query_tokens, grid), weights.offset_head.weight.value,
             weights.offset_head.bias.value.values());
  TokenSequence logits =
      linear(query_tokens, weights.attention_head.weight.value,
             weights.attention_head.bias.value.values());
  softmax_rows(logits.values(), static_cast<std::size_t>(cfg.samples_per_head()));
  plan.offsets.assign(offsets.values().begin(), offsets.values().end());
  plan.attention.assign(logits.values().begin(), logits.values().end());
  return plan;
}

void check_pyramid(const FeatureMap& p3, const FeatureMap& p4,
                   const FeatureMap& p5, const CshaConfig& config) {
  if (p3.batch() != p4.batch() || p5.batch() != p4.batch()) {
    throw GeometryError("csha: pyramid levels disagree on batch size");
  }
  const bool single_pixel = p3.height() == 1 && p3.width() == 1 &&
                            p4.height() == 1 && p4.width() == 1 &&
                            p5.height() == 1 && p5.width() == 1;
  if (single_pixel) {
    // Degenerate pyramid: every level collapses to one pixel.
  } else if (p3.height() != 2 * p4.height() || p3.width() != 2 * p4.width()) {
    throw GeometryError("csha: P3 extents " + shape_string(p3) +
                        " are not twice P4 extents " + shape_string(p4));
  } else if (p4.height() != 2 * p5.height() || p4.width() != 2 * p5.width()) {
    throw GeometryError("csha: P4 extents " + shape_string(p4) +
                        " are not twice P5 extents " + shape_string(p5));
  }
  const std::array<const FeatureMap*, kCshaLevels> levels{&p3, &p4, &p5};
  for (int l = 0; l < kCshaLevels; ++l) {
    if (levels[l]->channels() != config.in_channels[l]) {
      throw GeometryError("csha: P" + std::to_string(l + 3) + " has " +
                          std::to_string(levels[l]->channels()) +
                          " channels, weights expect " +
                          std::to_string(config.in_channels[l]));
    }
  }
}

FeatureMap csha_forward(const FeatureMap& p3, const FeatureMap& p4,
                        const FeatureMap& p5, const CshaWeights& weights,
                        CshaCache* cache) {
  const CshaConfig& cfg = weights.config;
  check_pyramid(p3, p4, p5, cfg);
  const std::array<const FeatureMap*, kCshaLevels> levels{&p3, &p4, &p5};
  const int batch = p4.batch();
  const int dh = cfg.head_dim();

  std::array<TokenSequence, kCshaLevels> flat;
  std::array<FeatureMap, kCshaLevels> projected;
  for (int l = 0; l < kCshaLevels; ++l) {
    flat[l] = flatten_tokens(*levels[l]);
    projected[l] = project_level(flat[l], weights.level_proj[l],
                                 levels[l]->height(), levels[l]->width());
  }
  TokenSequence queries = flatten_tokens(projected[kQueryLevel]);
  ReferenceGrid grid = reference_points(p4.height(), p4.width());
  SamplingPlan plan = predict_offsets_weights(queries, grid, weights);

  const int nq = plan.queries;
  const std::size_t total = plan.attention.size();
  std::vector<Real> locations(total * 2);
  std::vector<Real> samples(total * dh);
  TokenSequence aggregated({batch, nq, cfg.d_model});

  for (int b = 0; b < batch; ++b) {
    for (int q = 0; q < nq; ++q) {
      Real* agg = aggregated.row(b, q);
      for (int m = 0; m < cfg.heads; ++m) {
        for (int l = 0; l < kCshaLevels; ++l) {
          const FeatureMap& value = projected[l];
          const Real rx = level_coordinate(grid.points[q][0], value.width());
          const Real ry = level_coordinate(grid.points[q][1], value.height());
          for (int k = 0; k < cfg.points; ++k) {
            const std::size_t i = plan.index(b, q, m, l, k);
            const Real x = rx + plan.offsets[2 * i];
            const Real y = ry + plan.offsets[2 * i + 1];
            locations[2 * i] = x;
            locations[2 * i + 1] = y;
            Real* s = samples.data() + i * dh;
            bilinear_gather(value, b, m * dh, dh, x, y, s);
            const Real a = plan.attention[i];
            for (int c = 0; c < dh; ++c) agg[m * dh + c] += a * s[c];
          }
        }
      }
    }
  }
  TokenSequence pre = linear(aggregated, weights.output.weight.value,
                             weights.output.bias.value.values());
  TokenSequence out_tokens = pre;
  for (std::size_t i = 0; i < out_tokens.size(); ++i) out_tokens[i] += queries[i];
  FeatureMap out = unflatten_tokens(out_tokens, p4.height(), p4.width());

  if (cache) {
    cache->inputs = std::move(flat);
    cache->projected = std::move(projected);
    cache->query_input = with_reference(queries, grid);
    cache->queries = std::move(queries);
    cache->grid = std::move(grid);
    cache->plan = std::move(plan);
    cache->locations = std::move(locations);
    cache->samples = std::move(samples);
    cache->aggregated = std::move(aggregated);
    cache->pre_residual = std::move(pre);
    cache->height = p4.height();
    cache->width = p4.width();
  }
  return out;
}

std::array<FeatureMap, kCshaLevels> csha_backward(const FeatureMap& grad_output,
                                                  const CshaCache& cache,
                                                  CshaWeights& weights) {
  const CshaConfig& cfg = weights.config;
  const SamplingPlan& plan = cache.plan;
  const int batch = plan.batch;
  const int nq = plan.queries;
  const int dh = cfg.head_dim();
  const int lk = cfg.samples_per_head();

  const TokenSequence grad_pre = flatten_tokens(grad_output);
  TokenSequence grad_queries = grad_pre;  // residual
  const TokenSequence grad_agg =
      linear_backward(cache.aggregated, weights.output.weight.value, grad_pre,
                      weights.output.weight.grad,
                      weights.output.bias.grad.values());

  std::array<FeatureMap, kCshaLevels> grad_projected;
  for (int l = 0; l < kCshaLevels; ++l) {
    grad_projected[l] = FeatureMap(cache.projected[l].extents());
  }
  TokenSequence grad_offsets({batch, nq, cfg.heads * lk * 2});
  TokenSequence grad_logits({batch, nq, cfg.heads * lk});
  std::vector<Real> grad_attn(lk);
  std::vector<Real> grad_sample(dh);

  for (int b = 0; b < batch; ++b) {
    for (int q = 0; q < nq; ++q) {
      const Real* ga = grad_agg.row(b, q);
      for (int m = 0; m < cfg.heads; ++m) {
        const Real* gm = ga + m * dh;
        for (int l = 0; l < kCshaLevels; ++l) {
          for (int k = 0; k < cfg.points; ++k) {
            const std::size_t i = plan.index(b, q, m, l, k);
            const Real* s = cache.samples.data() + i * dh;
            Real gsum = 0;
            for (int c = 0; c < dh; ++c) {
              gsum += gm[c] * s[c];
              grad_sample[c] = plan.attention[i] * gm[c];
            }
            grad_attn[l * cfg.points + k] = gsum;
            Real gx = 0, gy = 0;
            bilinear_scatter(cache.projected[l], b, m * dh, dh,
                             cache.locations[2 * i], cache.locations[2 * i + 1],
                             grad_sample.data(), grad_projected[l], &gx, &gy);
            Real* go = grad_offsets.row(b, q) +
                       ((m * kCshaLevels + l) * cfg.points + k) * 2;
            go[0] = gx;
            go[1] = gy;
          }
        }
        const std::size_t first = plan.index(b, q, m, 0, 0);
        const std::vector<Real> gl = softmax_backward(
            std::span<const Real>(plan.attention.data() + first, lk), grad_attn);
        std::copy(gl.begin(), gl.end(), grad_logits.row(b, q) + m * lk);
      }
    }
  }

  const TokenSequence grad_query_input = linear_backward(
      cache.query_input, weights.offset_head.weight.value, grad_offsets,
      weights.offset_head.weight.grad, weights.offset_head.bias.grad.values());
  const TokenSequence grad_from_attn = linear_backward(
      cache.queries, weights.attention_head.weight.value, grad_logits,
      weights.attention_head.weight.grad,
      weights.attention_head.bias.grad.values());
  const int d = cfg.d_model;
  for (int b = 0; b < batch; ++b) {
    for (int q = 0; q < nq; ++q) {
      Real* g = grad_queries.row(b, q);
      const Real* gi = grad_query_input.row(b, q);
      const Real* ga = grad_from_attn.row(b, q);
      for (int c = 0; c < d; ++c) g[c] += gi[c] + ga[c];
    }
  }
  add_inplace(grad_projected[kQueryLevel],
              unflatten_tokens(grad_queries, cache.height, cache.width));

  std::array<FeatureMap, kCshaLevels> grad_inputs;
  for (int l = 0; l < kCshaLevels; ++l) {
    const FeatureMap& gp = grad_projected[l];
    const TokenSequence g = linear_backward(
        cache.inputs[l], weights.level_proj[l].weight.value,
        flatten_tokens(gp), weights.level_proj[l].weight.grad,
        weights.level_proj[l].bias.grad.values());
    grad_inputs[l] = unflatten_tokens(g, gp.height(), gp.width());
  }
  return grad_inputs;
}

Real DenseAttention::row_sum(int b, int q, int m) const {
  const Real* row =
      weights.data() +
      ((static_cast<std::size_t>(b) * queries + q) * heads + m) * total_pixels;
  Real s = 0;
  for (int i = 0; i < total_pixels; ++i) s += row[i];
  return s;
}

DenseAttention dense_attention_from_weights(const FeatureMap& p3,
                                            const FeatureMap& p4,
                                            const FeatureMap& p5,
                                            const CshaWeights& weights) {
  const CshaConfig& cfg = weights.config;
  check_pyramid(p3, p4, p5, cfg);
  const std::array<const FeatureMap*, kCshaLevels> levels{&p3, &p4, &p5};

  const TokenSequence queries = flatten_tokens(
      project_level(flatten_tokens(p4), weights.level_proj[kQueryLevel],
                    p4.height(), p4.width()));
  const ReferenceGrid grid = reference_points(p4.height(), p4.width());
  const SamplingPlan plan = predict_offsets_weights(queries, grid, weights);

  DenseAttention dense;
  dense.batch = plan.batch;
  dense.queries = plan.queries;
  dense.heads = cfg.heads;
  for (int l = 0; l < kCshaLevels; ++l) {
    dense.level_offset[l] = dense.total_pixels;
    dense.total_pixels += levels[l]->height() * levels[l]->width();
  }
  dense.weights.assign(static_cast<std::size_t>(dense.batch) * dense.queries *
                           dense.heads * dense.total_pixels,
                       Real(0));

  for (int b = 0; b < plan.batch; ++b) {
    for (int q = 0; q < plan.queries; ++q) {
      for (int m = 0; m < cfg.heads; ++m) {
        Real* row = dense.weights.data() +
                    ((static_cast<std::size_t>(b) * dense.queries + q) *
                         dense.heads +
                     m) *
                        dense.total_pixels;
        for (int l = 0; l < kCshaLevels; ++l) {
          const int h = levels[l]->height();
          const int w = levels[l]->width();
          const Real rx = level_coordinate(grid.points[q][0], w);
          const Real ry = level_coordinate(grid.points[q][1], h);
          for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
              Real acc = 0;
              for (int k = 0; k < cfg.points; ++k) {
                const std::size_t i = plan.index(b, q, m, l, k);
                const Real sx = rx + plan.offsets[2 * i];
                const Real sy = ry + plan.offsets[2 * i + 1];
                acc += plan.attention[i] * tent(x - sx) * tent(y - sy);
              }
              row[dense.level_offset[l] + y * w + x] = acc;
            }
          }
        }
      }
    }
  }
  return dense;
}

FeatureMap csha_dense_oracle(const FeatureMap& p3, const FeatureMap& p4,
                             const FeatureMap& p5, const CshaWeights& weights,
                             const DenseAttention& attention) {
  const CshaConfig& cfg = weights.config;
  check_pyramid(p3, p4, p5, cfg);
  const std::array<const FeatureMap*, kCshaLevels> levels{&p3, &p4, &p5};
  const int dh = cfg.head_dim();

  // Keys/values: every pixel of every level, projected to d_model.
  TokenSequence values({p4.batch(), attention.total_pixels, cfg.d_model});
  TokenSequence queries;
  for (int l = 0; l < kCshaLevels; ++l) {
    const TokenSequence proj =
        linear(flatten_tokens(*levels[l]), weights.level_proj[l].weight.value,
               weights.level_proj[l].bias.value.values());
    for (int b = 0; b < p4.batch(); ++b) {
      for (int t = 0; t < proj.tokens(); ++t) {
        std::copy_n(proj.row(b, t), cfg.d_model,
                    values.row(b, attention.level_offset[l] + t));
      }
    }
    if (l == kQueryLevel) queries = proj;
  }

  TokenSequence aggregated({p4.batch(), attention.queries, cfg.d_model});
  for (int b = 0; b < attention.batch; ++b) {
    for (int q = 0; q < attention.queries; ++q) {
      Real* agg = aggregated.row(b, q);
      for (int m = 0; m < cfg.heads; ++m) {
        const Real* row =
            attention.weights.data() +
            ((static_cast<std::size_t>(b) * attention.queries + q) *
                 attention.heads +
             m) *
                attention.total_pixels;
        for (int p = 0; p < attention.total_pixels; ++p) {
          const Real* v = values.row(b, p) + m * dh;
          for (int c = 0; c < dh; ++c) agg[m * dh + c] += row[p] * v[c];
        }
      }
    }
  }
  TokenSequence out = linear(aggregated, weights.output.weight.value,
                             weights.output.bias.value.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += queries[i];
  return unflatten_tokens(out, p4.height(), p4.width());
}

namespace {

// Costs common to both paths: level projections, query-conditioned heads,
// output projection and residual.
std::uint64_t shared_flops(const CshaConfig& cfg, std::uint64_t nq,
                           const PyramidExtents& extents) {
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t mlk =
      static_cast<std::uint64_t>(cfg.heads) * cfg.samples_per_head();
  std::uint64_t f = 0;
  for (int l = 0; l < kCshaLevels; ++l) {
    const std::uint64_t pixels =
        static_cast<std::uint64_t>(extents[l][0]) * extents[l][1];
    f += pixels * 2 * d * cfg.in_channels[l];
  }
  f += nq * 2 * (d + 2) * mlk * 2;         // offset head
  f += nq * 2 * d * mlk;                   // attention logits
  f += nq * 3 * mlk;                       // softmax
  f += nq * 2 * d * cfg.out_channels;      // output projection
  f += nq * cfg.out_channels;              // residual
  return f;
}

}  // namespace

std::uint64_t csha_sparse_flops(const CshaConfig& config, int batch,
                                const PyramidExtents& extents) {
  const std::uint64_t nq =
      static_cast<std::uint64_t>(extents[kQueryLevel][0]) *
      extents[kQueryLevel][1];
  const std::uint64_t dh = config.head_dim();
  const std::uint64_t mlk =
      static_cast<std::uint64_t>(config.heads) * config.samples_per_head();
  // Per sample: location (4), corner weights (12), 4-corner gather (8*dh),
  // weighted accumulation (2*dh).
  const std::uint64_t per_sample = 4 + 12 + 8 * dh + 2 * dh;
  return static_cast<std::uint64_t>(batch) *
         (shared_flops(config, nq, extents) + nq * mlk * per_sample);
}

std::uint64_t csha_dense_flops(const CshaConfig& config, int batch,
                               const PyramidExtents& extents) {
  const std::uint64_t nq =
      static_cast<std::uint64_t>(extents[kQueryLevel][0]) *
      extents[kQueryLevel][1];
  const std::uint64_t dh = config.head_dim();
  std::uint64_t pixels = 0;
  for (const auto& e : extents) {
    pixels += static_cast<std::uint64_t>(e[0]) * e[1];
  }
  // Per (query, head, pixel): the weight (K tent products, 8 each, on the
  // pixel's level) and accumulation over the head channels (2*dh).
  const std::uint64_t per_pixel = 8 * static_cast<std::uint64_t>(config.points) +
                                  2 * dh;
  return static_cast<std::uint64_t>(batch) *
         (shared_flops(config, nq, extents) +
          nq * static_cast<std::uint64_t>(config.heads) * pixels * per_pixel);
}

}  // namespace tinydet
