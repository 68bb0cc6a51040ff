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

#include "tinydet/sppf.h"

#include <algorithm>
#include <string>

namespace tinydet {

SppfWeights SppfWeights::make(int channels, Rng& rng) {
  const int hidden = std::max(1, channels / 2);
  SppfWeights w;
  w.reduce = ConvUnit(channels, hidden, 1, 1, 0, {});
  w.expand = ConvUnit(4 * hidden, channels, 1, 1, 0, {});
  w.reduce.init(rng);
  w.expand.init(rng);
  return w;
}

void SppfWeights::collect(ParamSlots& out, std::string_view prefix) {
  const std::string p(prefix);
  reduce.collect(out, p + "reduce.");
  expand.collect(out, p + "expand.");
}

FeatureMap sppf_forward(const FeatureMap& input, SppfWeights& weights,
                        Mode mode, SppfCache* cache) {
  const FeatureMap x = conv_unit_forward(input, weights.reduce, mode,
                                         cache ? &cache->reduce : nullptr);
  const int pad = kSppfPool / 2;
  FeatureMap p1 = max_pool(x, kSppfPool, 1, pad, cache ? &cache->argmax[0] : nullptr);
  FeatureMap p2 = max_pool(p1, kSppfPool, 1, pad, cache ? &cache->argmax[1] : nullptr);
  FeatureMap p3 = max_pool(p2, kSppfPool, 1, pad, cache ? &cache->argmax[2] : nullptr);
  const FeatureMap* parts[] = {&x, &p1, &p2, &p3};
  const FeatureMap cat = concat_channels(parts);
  if (cache) cache->pooled_extents = x.extents();
  return conv_unit_forward(cat, weights.expand, mode,
                           cache ? &cache->expand : nullptr);
}

FeatureMap sppf_backward(const FeatureMap& grad_output, const SppfCache& cache,
                         SppfWeights& weights) {
  const FeatureMap g_cat = conv_unit_backward(grad_output, cache.expand,
                                              weights.expand);
  const int hidden = cache.pooled_extents[1];
  const int sizes[] = {hidden, hidden, hidden, hidden};
  const std::vector<FeatureMap> g = split_channels(g_cat, sizes);
  // Chained pools: walk back from the last one, accumulating the skip grads.
  FeatureMap g_p = g[3];
  for (int i = 2; i >= 0; --i) {
    FeatureMap back = max_pool_backward(cache.pooled_extents, cache.argmax[i], g_p);
    add_inplace(back, g[i]);
    g_p = std::move(back);
  }
  return conv_unit_backward(g_p, cache.reduce, weights.reduce);
}

}  // namespace tinydet
