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


// Random CSHA geometries and an independent zero-offset reference.

#ifndef TINYDET_TESTS_CSHA_ORACLE_H_
#define TINYDET_TESTS_CSHA_ORACLE_H_

#include <array>
#include <vector>

#include "test_util.h"
#include "tinydet/csha.h"
#include "tinydet/ops.h"

namespace tinydet::testing {

struct Geometry {
  int batch;
  int h5, w5;
  CshaConfig cfg;
};

inline Geometry random_geometry(Rng& rng) {
  Geometry g;
  g.batch = 1 + static_cast<int>(rng() % 2);
  g.h5 = 1 + static_cast<int>(rng() % 3);
  g.w5 = 1 + static_cast<int>(rng() % 3);
  const int heads[] = {1, 2, 4};
  g.cfg.heads = heads[rng() % 3];
  g.cfg.d_model = g.cfg.heads * (1 + static_cast<int>(rng() % 3));
  g.cfg.out_channels = g.cfg.d_model;
  g.cfg.points = 1 + static_cast<int>(rng() % 4);
  for (int& c : g.cfg.in_channels) c = 1 + static_cast<int>(rng() % 5);
  g.cfg.in_channels[1] = g.cfg.d_model;
  return g;
}

struct Pyramid {
  FeatureMap p3, p4, p5;
};

inline Pyramid random_pyramid(const Geometry& g, Rng& rng) {
  const auto& c = g.cfg.in_channels;
  return {random_tensor<4>({g.batch, c[0], 4 * g.h5, 4 * g.w5}, rng),
          random_tensor<4>({g.batch, c[1], 2 * g.h5, 2 * g.w5}, rng),
          random_tensor<4>({g.batch, c[2], g.h5, g.w5}, rng)};
}

// Trained-looking weights: nonzero offset and attention heads.
inline CshaWeights random_weights(const CshaConfig& cfg, Rng& rng) {
  CshaWeights w = CshaWeights::make(cfg, rng);
  for (LinearParams* p : {&w.offset_head, &w.attention_head}) {
    for (Real& v : p->weight.value.values()) v = testing::uniform(rng, -1, 1);
    for (Real& v : p->bias.value.values()) v += testing::uniform(rng, -1, 1);
  }
  return w;
}

// Expected output when every sampling offset is zero: each head reads each
// level once, at the query's reference point, with the summed weight of its
// points on that level. Built from the public ops only.
inline FeatureMap zero_offset_oracle(const Pyramid& p, const CshaWeights& w) {
  const int batch = p.p4.batch();
  const std::array<const FeatureMap*, 3> lv{&p.p3, &p.p4, &p.p5};
  std::array<FeatureMap, 3> proj;
  for (int l = 0; l < 3; ++l) {
    proj[l] = unflatten_tokens(
        linear(flatten_tokens(*lv[l]), w.level_proj[l].weight.value,
               w.level_proj[l].bias.value.values()),
        lv[l]->height(), lv[l]->width());
  }
  const TokenSequence z = flatten_tokens(proj[1]);
  TokenSequence logits = linear(z, w.attention_head.weight.value,
                                w.attention_head.bias.value.values());
  const int nq = z.tokens();
  const int h4 = p.p4.height(), w4 = p.p4.width();
  const int d = w.config.d_model, dh = w.config.head_dim(), kp = w.config.points;
  TokenSequence agg({batch, nq, d});
  for (int b = 0; b < batch; ++b)
    for (int q = 0; q < nq; ++q) {
      const Real nx = (q % w4 + 0.5) / w4;
      const Real ny = (q / w4 + 0.5) / h4;
      for (int m = 0; m < w.config.heads; ++m) {
        const Real* lg = logits.row(b, q) + m * 3 * kp;
        const std::vector<Real> a =
            softmax(std::span<const Real>(lg, static_cast<std::size_t>(3 * kp)));
        for (int l = 0; l < 3; ++l) {
          Tensor<3> pt({batch, 1, 2});
          pt(b, 0, 0) = nx * proj[l].width() - 0.5;
          pt(b, 0, 1) = ny * proj[l].height() - 0.5;
          const TokenSequence s = bilinear_sample(proj[l], pt);
          Real wsum = 0;
          for (int k = 0; k < kp; ++k) wsum += a[l * kp + k];
          for (int c = 0; c < dh; ++c) agg(b, q, m * dh + c) += wsum * s(b, 0, m * dh + c);
        }
      }
    }
  TokenSequence out = linear(agg, w.output.weight.value, w.output.bias.value.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  return unflatten_tokens(out, h4, w4);
}

}  // namespace tinydet::testing

#endif  // TINYDET_TESTS_CSHA_ORACLE_H_
