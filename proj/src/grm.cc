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

#include "tinydet/grm.h"

#include <cmath>
#include <string>

namespace tinydet {

GrmWeights GrmWeights::make(int channels, int height, int width, int heads,
                            bool positional_and_norm, Rng& rng) {
  if (heads <= 0 || channels % heads != 0) {
    throw ConfigError("grm: channels " + std::to_string(channels) +
                      " not divisible by head count " + std::to_string(heads));
  }
  GrmWeights w;
  w.heads = heads;
  w.tokens = height * width;
  w.channels = channels;
  w.positional_and_norm = positional_and_norm;
  if (positional_and_norm) {
    w.pos_embed = Param<2>({w.tokens, channels});
    normal_fill(w.pos_embed.value.values(), Real(0.02), rng);
    w.norm = LayerNorm(channels);
  }
  for (LinearParams* p : {&w.query, &w.key, &w.value, &w.output}) {
    *p = LinearParams(channels, channels);
    p->init(rng);
  }
  return w;
}

void GrmWeights::collect(ParamSlots& out, std::string_view prefix) {
  const std::string p(prefix);
  if (positional_and_norm) {
    add_slot(out, p, "pos_embed", pos_embed);
    norm.collect(out, p + "norm.");
  }
  query.collect(out, p + "query.");
  key.collect(out, p + "key.");
  value.collect(out, p + "value.");
  output.collect(out, p + "output.");
}

TokenSequence flatten_with_pos(const FeatureMap& p5, const GrmWeights& weights,
                               GrmCache* cache) {
  if (p5.channels() != weights.channels) {
    throw GeometryError("grm: input has " + std::to_string(p5.channels()) +
                        " channels, weights expect " +
                        std::to_string(weights.channels));
  }
  TokenSequence seq = flatten_tokens(p5);
  if (cache) {
    cache->height = p5.height();
    cache->width = p5.width();
  }
  if (!weights.positional_and_norm) return seq;
  if (seq.tokens() != weights.tokens) {
    throw GeometryError("grm: input has " + std::to_string(seq.tokens()) +
                        " tokens, positional embedding covers " +
                        std::to_string(weights.tokens));
  }
  for (int b = 0; b < seq.extent(0); ++b) {
    for (int t = 0; t < seq.tokens(); ++t) {
      Real* row = seq.row(b, t);
      for (int c = 0; c < seq.features(); ++c) {
        row[c] += weights.pos_embed.value(t, c);
      }
    }
  }
  TokenSequence normed =
      layer_norm(seq, weights.norm, cache ? &cache->norm : nullptr);
  if (cache) cache->embedded = std::move(seq);
  return normed;
}

TokenSequence mhsa(const TokenSequence& seq, const GrmWeights& weights,
                   MhsaCache* cache) {
  const int batch = seq.extent(0);
  const int n = seq.tokens();
  const int heads = weights.heads;
  const int d = weights.head_dim();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d));

  TokenSequence q = linear(seq, weights.query.weight.value,
                           weights.query.bias.value.values());
  TokenSequence k =
      linear(seq, weights.key.weight.value, weights.key.bias.value.values());
  TokenSequence v = linear(seq, weights.value.weight.value,
                           weights.value.bias.value.values());
  TokenSequence context(seq.extents());
  std::vector<Real> attention(static_cast<std::size_t>(batch) * heads * n * n);

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * d;
      for (int i = 0; i < n; ++i) {
        Real* row = attention.data() +
                    ((static_cast<std::size_t>(b) * heads + h) * n + i) * n;
        const Real* qi = q.row(b, i) + c0;
        for (int j = 0; j < n; ++j) {
          const Real* kj = k.row(b, j) + c0;
          Real s = 0;
          for (int c = 0; c < d; ++c) s += qi[c] * kj[c];
          row[j] = s * scale;
        }
        softmax_rows(std::span<Real>(row, n), n);
        Real* out = context.row(b, i) + c0;
        for (int j = 0; j < n; ++j) {
          const Real* vj = v.row(b, j) + c0;
          for (int c = 0; c < d; ++c) out[c] += row[j] * vj[c];
        }
      }
    }
  }
  TokenSequence out = linear(context, weights.output.weight.value,
                             weights.output.bias.value.values());
  if (cache) {
    cache->input = seq;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->context = std::move(context);
    cache->attention = std::move(attention);
  }
  return out;
}

TokenSequence mhsa_backward(const TokenSequence& grad_output,
                            const MhsaCache& cache, GrmWeights& weights) {
  const int batch = cache.input.extent(0);
  const int n = cache.input.tokens();
  const int heads = weights.heads;
  const int d = weights.head_dim();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d));

  const TokenSequence grad_context = linear_backward(
      cache.context, weights.output.weight.value, grad_output,
      weights.output.weight.grad, weights.output.bias.grad.values());

  TokenSequence gq(cache.q.extents()), gk(cache.k.extents()),
      gv(cache.v.extents());
  std::vector<Real> grad_probs(n);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * d;
      for (int i = 0; i < n; ++i) {
        const Real* probs =
            cache.attention.data() +
            ((static_cast<std::size_t>(b) * heads + h) * n + i) * n;
        const Real* gc = grad_context.row(b, i) + c0;
        for (int j = 0; j < n; ++j) {
          const Real* vj = cache.v.row(b, j) + c0;
          Real* gvj = gv.row(b, j) + c0;
          Real s = 0;
          for (int c = 0; c < d; ++c) {
            s += gc[c] * vj[c];
            gvj[c] += probs[j] * gc[c];
          }
          grad_probs[j] = s;
        }
        const std::vector<Real> grad_logits = softmax_backward(
            std::span<const Real>(probs, n), grad_probs);
        const Real* qi = cache.q.row(b, i) + c0;
        Real* gqi = gq.row(b, i) + c0;
        for (int j = 0; j < n; ++j) {
          const Real g = grad_logits[j] * scale;
          const Real* kj = cache.k.row(b, j) + c0;
          Real* gkj = gk.row(b, j) + c0;
          for (int c = 0; c < d; ++c) {
            gqi[c] += g * kj[c];
            gkj[c] += g * qi[c];
          }
        }
      }
    }
  }

  TokenSequence grad_input =
      linear_backward(cache.input, weights.query.weight.value, gq,
                      weights.query.weight.grad, weights.query.bias.grad.values());
  const TokenSequence gk_in =
      linear_backward(cache.input, weights.key.weight.value, gk,
                      weights.key.weight.grad, weights.key.bias.grad.values());
  const TokenSequence gv_in =
      linear_backward(cache.input, weights.value.weight.value, gv,
                      weights.value.weight.grad, weights.value.bias.grad.values());
  for (std::size_t i = 0; i < grad_input.size(); ++i) {
    grad_input[i] += gk_in[i] + gv_in[i];
  }
  return grad_input;
}

FeatureMap grm_forward(const FeatureMap& p5, const GrmWeights& weights,
                       GrmCache* cache) {
  const TokenSequence seq = flatten_with_pos(p5, weights, cache);
  TokenSequence attended = mhsa(seq, weights, cache ? &cache->attn : nullptr);
  FeatureMap out = unflatten_tokens(attended, p5.height(), p5.width());
  add_inplace(out, p5);
  if (cache) cache->pre_residual = std::move(attended);
  return out;
}

FeatureMap grm_backward(const FeatureMap& grad_output, const GrmCache& cache,
                        GrmWeights& weights) {
  FeatureMap grad_input = grad_output;  // residual path
  TokenSequence g =
      mhsa_backward(flatten_tokens(grad_output), cache.attn, weights);
  if (weights.positional_and_norm) {
    g = layer_norm_backward(g, cache.norm, weights.norm);
    for (int b = 0; b < g.extent(0); ++b) {
      for (int t = 0; t < g.tokens(); ++t) {
        const Real* row = g.row(b, t);
        for (int c = 0; c < g.features(); ++c) {
          weights.pos_embed.grad(t, c) += row[c];
        }
      }
    }
  }
  add_inplace(grad_input, unflatten_tokens(g, cache.height, cache.width));
  return grad_input;
}

}  // namespace tinydet
