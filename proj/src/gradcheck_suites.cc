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

#include "tinydet/gradcheck_suites.h"

#include <algorithm>
#include <array>
#include <functional>

#include "tinydet/boxes.h"
#include "tinydet/csha.h"
#include "tinydet/detector.h"
#include "tinydet/grm.h"
#include "tinydet/rhwd.h"
#include "tinydet/scene.h"
#include "tinydet/sppf.h"

namespace tinydet {
namespace {

using Reports = std::vector<GradCheckReport>;

template <std::size_t R>
Param<R> random_param(const typename Tensor<R>::Extents& e, Rng& rng,
                      Real scale = 1) {
  Param<R> p(e);
  normal_fill(p.value.values(), scale, rng);
  return p;
}

template <std::size_t R>
Tensor<R> random_tensor(const typename Tensor<R>::Extents& e, Rng& rng) {
  Tensor<R> t(e);
  normal_fill(t.values(), 1, rng);
  return t;
}

template <std::size_t R>
void assign(Param<R>& p, const Tensor<R>& grad) {
  std::copy(grad.values().begin(), grad.values().end(), p.grad.values().begin());
}

GradCheckOptions op_options(std::uint64_t seed) {
  GradCheckOptions o;
  o.tolerance = kOpTolerance;
  o.seed = seed;
  return o;
}

// ---------------------------------------------------------------------------

Reports tensor_suite(std::uint64_t seed) {
  Reports out;
  Rng rng(seed);
  const GradCheckOptions opts = op_options(seed);

  for (const auto [k, stride, pad] :
       {std::array<int, 3>{3, 1, 1}, std::array<int, 3>{4, 2, 1}}) {
    Param<4> x = random_param<4>({2, 3, 6, 6}, rng);
    Param<4> kernel = random_param<4>({4, 3, k, k}, rng, Real(0.5));
    Param<1> bias = random_param<1>({4}, rng);
    const FeatureMap r =
        random_tensor<4>(conv2d(x.value, kernel.value, bias.value.values(),
                                stride, pad).extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    add_slot(slots, "", "kernel", kernel);
    add_slot(slots, "", "bias", bias);
    out.push_back(grad_check(
        "conv2d_k" + std::to_string(k) + "_s" + std::to_string(stride),
        [&] {
          return dot(conv2d(x.value, kernel.value, bias.value.values(), stride,
                            pad), r);
        },
        [&] {
          zero_grads(slots);
          assign(x, conv2d_backward(x.value, kernel.value, stride, pad, r,
                                    kernel.grad, bias.grad.values()));
        },
        slots, opts));
  }

  {
    Param<4> x = random_param<4>({3, 4, 3, 3}, rng);
    BatchNorm bn(4);
    normal_fill(bn.gamma.value.values(), 1, rng);
    normal_fill(bn.beta.value.values(), 1, rng);
    const FeatureMap r = random_tensor<4>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    bn.collect(slots, "bn.");
    out.push_back(grad_check(
        "batch_norm_train",
        [&] { return dot(batch_norm(x.value, bn, Mode::kTrain), r); },
        [&] {
          zero_grads(slots);
          BatchNormCache cache;
          batch_norm(x.value, bn, Mode::kTrain, &cache);
          assign(x, batch_norm_backward(r, cache, bn));
        },
        slots, opts));
  }

  {
    Param<3> x = random_param<3>({2, 5, 8}, rng);
    LayerNorm ln(8);
    normal_fill(ln.gamma.value.values(), 1, rng);
    normal_fill(ln.beta.value.values(), 1, rng);
    const TokenSequence r = random_tensor<3>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    ln.collect(slots, "ln.");
    out.push_back(grad_check(
        "layer_norm",
        [&] { return dot(layer_norm(x.value, ln), r); },
        [&] {
          zero_grads(slots);
          LayerNormCache cache;
          layer_norm(x.value, ln, &cache);
          assign(x, layer_norm_backward(r, cache, ln));
        },
        slots, opts));
  }

  {
    Param<3> x = random_param<3>({2, 5, 6}, rng);
    Param<2> w = random_param<2>({4, 6}, rng);
    Param<1> b = random_param<1>({4}, rng);
    const TokenSequence r = random_tensor<3>({2, 5, 4}, rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    add_slot(slots, "", "weight", w);
    add_slot(slots, "", "bias", b);
    out.push_back(grad_check(
        "linear",
        [&] { return dot(linear(x.value, w.value, b.value.values()), r); },
        [&] {
          zero_grads(slots);
          assign(x, linear_backward(x.value, w.value, r, w.grad,
                                    b.grad.values()));
        },
        slots, opts));
  }

  {
    Param<4> x = random_param<4>({2, 3, 4, 4}, rng, 2);
    const FeatureMap r = random_tensor<4>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    out.push_back(grad_check(
        "silu", [&] { return dot(silu(x.value), r); },
        [&] {
          zero_grads(slots);
          assign(x, silu_backward(x.value, r));
        },
        slots, opts));
  }

  {
    Param<1> x = random_param<1>({7}, rng, 2);
    const Vector r = random_tensor<1>({7}, rng);
    ParamSlots slots;
    add_slot(slots, "", "logits", x);
    out.push_back(grad_check(
        "softmax",
        [&] { return dot(Vector({7}, softmax(x.value.values())), r); },
        [&] {
          zero_grads(slots);
          const std::vector<Real> p = softmax(x.value.values());
          assign(x, Vector({7}, softmax_backward(p, r.values())));
        },
        slots, opts));
  }

  {
    Param<4> map = random_param<4>({2, 3, 5, 6}, rng);
    Param<3> points({2, 7, 2});
    std::uniform_real_distribution<Real> coord(-Real(0.8), Real(5.8));
    for (Real& v : points.value.values()) v = coord(rng);
    const TokenSequence r = random_tensor<3>({2, 7, 3}, rng);
    ParamSlots slots;
    add_slot(slots, "", "map", map);
    add_slot(slots, "", "points", points);
    out.push_back(grad_check(
        "bilinear_sample",
        [&] { return dot(bilinear_sample(map.value, points.value), r); },
        [&] {
          zero_grads(slots);
          bilinear_sample_backward(map.value, points.value, r, map.grad,
                                   points.grad);
        },
        slots, opts));
  }

  {
    Param<4> x = random_param<4>({2, 3, 6, 6}, rng);
    const FeatureMap r = random_tensor<4>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    out.push_back(grad_check(
        "max_pool_k5_s1",
        [&] { return dot(max_pool(x.value, 5, 1, 2), r); },
        [&] {
          zero_grads(slots);
          std::vector<std::size_t> argmax;
          max_pool(x.value, 5, 1, 2, &argmax);
          assign(x, max_pool_backward(x.value.extents(), argmax, r));
        },
        slots, opts));
  }

  {
    Param<4> x = random_param<4>({2, 3, 3, 4}, rng);
    const FeatureMap r = random_tensor<4>({2, 3, 6, 8}, rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    out.push_back(grad_check(
        "upsample_nearest2x",
        [&] { return dot(upsample_nearest2x(x.value), r); },
        [&] {
          zero_grads(slots);
          assign(x, upsample_nearest2x_backward(r));
        },
        slots, opts));
  }

  {
    Param<4> x = random_param<4>({2, 3, 4, 6}, rng);
    const FeatureMap r = random_tensor<4>({2, 12, 2, 3}, rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    out.push_back(grad_check(
        "pixel_unshuffle",
        [&] { return dot(pixel_unshuffle(x.value), r); },
        [&] {
          zero_grads(slots);
          assign(x, pixel_shuffle(r));
        },
        slots, opts));
  }
  return out;
}

// ---------------------------------------------------------------------------

Reports rhwd_suite(std::uint64_t seed) {
  Reports out;
  Rng rng(seed + 1);
  const GradCheckOptions opts = op_options(seed);
  {
    Param<4> x = random_param<4>({2, 3, 6, 8}, rng);
    const FeatureMap r = random_tensor<4>({2, 12, 3, 4}, rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    out.push_back(grad_check(
        "haar_forward",
        [&] { return dot(concat_subbands(haar_forward(x.value)), r); },
        [&] {
          zero_grads(slots);
          assign(x, haar_inverse(split_subbands(r)));
        },
        slots, opts));
  }
  for (const auto& [variant, name] :
       {std::pair{StemVariant::kRhwd, "stem_rhwd"},
        std::pair{StemVariant::kLargeKernel, "stem_largekernel"},
        std::pair{StemVariant::kFocus, "stem_focus"}}) {
    Param<4> x = random_param<4>({2, 3, 8, 8}, rng);
    StemWeights w = StemWeights::make(variant, 3, 4, rng);
    const FeatureMap r = random_tensor<4>({2, 4, 4, 4}, rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    w.collect(slots, "stem.");
    out.push_back(grad_check(
        name, [&] { return dot(stem_forward(x.value, w, Mode::kTrain), r); },
        [&] {
          zero_grads(slots);
          StemCache cache;
          stem_forward(x.value, w, Mode::kTrain, &cache);
          assign(x, stem_backward(r, cache, w));
        },
        slots, opts));
  }
  return out;
}

// ---------------------------------------------------------------------------

void randomize_linear(LinearParams& p, Rng& rng, Real scale) {
  normal_fill(p.weight.value.values(), scale, rng);
  normal_fill(p.bias.value.values(), scale, rng);
}

Reports grm_suite(std::uint64_t seed) {
  Reports out;
  Rng rng(seed + 2);
  const GradCheckOptions opts = op_options(seed);
  {
    GrmWeights w = GrmWeights::make(8, 2, 3, 2, false, rng);
    randomize_linear(w.output, rng, Real(0.5));
    Param<3> x = random_param<3>({2, 6, 8}, rng);
    const TokenSequence r = random_tensor<3>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    w.collect(slots, "mhsa.");
    out.push_back(grad_check(
        "mhsa",
        [&] { return dot(mhsa(x.value, w), r); },
        [&] {
          zero_grads(slots);
          MhsaCache cache;
          mhsa(x.value, w, &cache);
          assign(x, mhsa_backward(r, cache, w));
        },
        slots, opts));
  }
  for (const bool full : {false, true}) {
    GrmWeights w = GrmWeights::make(8, 2, 3, 2, full, rng);
    randomize_linear(w.output, rng, Real(0.5));
    if (full) {
      normal_fill(w.norm.gamma.value.values(), 1, rng);
      normal_fill(w.norm.beta.value.values(), Real(0.5), rng);
    }
    Param<4> x = random_param<4>({2, 8, 2, 3}, rng);
    const FeatureMap r = random_tensor<4>(x.value.extents(), rng);
    ParamSlots slots;
    add_slot(slots, "", "input", x);
    w.collect(slots, "grm.");
    out.push_back(grad_check(
        full ? "grm" : "grm_plain_mhsa",
        [&] { return dot(grm_forward(x.value, w), r); },
        [&] {
          zero_grads(slots);
          GrmCache cache;
          grm_forward(x.value, w, &cache);
          assign(x, grm_backward(r, cache, w));
        },
        slots, opts));
  }
  return out;
}

// ---------------------------------------------------------------------------

Reports csha_suite(std::uint64_t seed) {
  Reports out;
  Rng rng(seed + 3);
  const GradCheckOptions opts = op_options(seed);
  CshaConfig cfg;
  cfg.in_channels = {3, 8, 4};
  cfg.d_model = 8;
  cfg.out_channels = 8;
  cfg.heads = 2;
  cfg.points = 2;
  CshaWeights w = CshaWeights::make(cfg, rng);
  // Move away from the zero initialization so offsets and weights vary.
  randomize_linear(w.offset_head, rng, Real(0.3));
  randomize_linear(w.attention_head, rng, Real(0.5));
  randomize_linear(w.output, rng, Real(0.5));
  Param<4> p3 = random_param<4>({2, 3, 8, 8}, rng);
  Param<4> p4 = random_param<4>({2, 8, 4, 4}, rng);
  Param<4> p5 = random_param<4>({2, 4, 2, 2}, rng);
  const FeatureMap r = random_tensor<4>({2, 8, 4, 4}, rng);
  ParamSlots slots;
  add_slot(slots, "", "p3", p3);
  add_slot(slots, "", "p4", p4);
  add_slot(slots, "", "p5", p5);
  w.collect(slots, "csha.");
  out.push_back(grad_check(
      "csha",
      [&] { return dot(csha_forward(p3.value, p4.value, p5.value, w), r); },
      [&] {
        zero_grads(slots);
        CshaCache cache;
        csha_forward(p3.value, p4.value, p5.value, w, &cache);
        const auto g = csha_backward(r, cache, w);
        assign(p3, g[0]);
        assign(p4, g[1]);
        assign(p5, g[2]);
      },
      slots, opts));
  return out;
}

// ---------------------------------------------------------------------------

Reports losses_suite(std::uint64_t seed) {
  Reports out;
  Rng rng(seed + 4);
  std::uniform_real_distribution<Real> pos(0, 10), size(2, 8), jitter(-2, 2);
  GradCheckOptions opts = op_options(seed);
  opts.tolerance = kLossTolerance;
  const std::array<std::pair<Real, Real>, 3> weights{
      {{Real(0.5), Real(0.5)}, {Real(1), Real(0)}, {Real(0), Real(1)}}};
  for (int trial = 0; trial < 6; ++trial) {
    const Box gt = Box::from_xywh(pos(rng), pos(rng), size(rng), size(rng));
    Param<1> pred({4});
    // Overlapping by construction: a jittered copy of the GT.
    pred.value[0] = gt.x_min + jitter(rng) / 2;
    pred.value[1] = gt.y_min + jitter(rng) / 2;
    pred.value[2] = gt.x_max + jitter(rng) / 2;
    pred.value[3] = gt.y_max + jitter(rng) / 2;
    RegLossConfig cfg;
    cfg.alpha1 = weights[trial % 3].first;
    cfg.alpha2 = weights[trial % 3].second;
    cfg.c = size(rng);
    const auto as_box = [&] {
      return Box{pred.value[0], pred.value[1], pred.value[2], pred.value[3]};
    };
    ParamSlots slots;
    add_slot(slots, "", "pred", pred);
    out.push_back(grad_check(
        "regression_loss_" + std::to_string(trial),
        [&] { return regression_loss(as_box(), gt, cfg); },
        [&] {
          const auto g = regression_loss_grad(as_box(), gt, cfg);
          std::copy(g.begin(), g.end(), pred.grad.values().begin());
        },
        slots, opts));
  }
  return out;
}

// ---------------------------------------------------------------------------

Reports sppf_suite(std::uint64_t seed) {
  Rng rng(seed + 5);
  SppfWeights w = SppfWeights::make(6, rng);
  Param<4> x = random_param<4>({2, 6, 5, 5}, rng);
  const FeatureMap r = random_tensor<4>(x.value.extents(), rng);
  ParamSlots slots;
  add_slot(slots, "", "input", x);
  w.collect(slots, "sppf.");
  return {grad_check(
      "sppf", [&] { return dot(sppf_forward(x.value, w, Mode::kTrain), r); },
      [&] {
        zero_grads(slots);
        SppfCache cache;
        sppf_forward(x.value, w, Mode::kTrain, &cache);
        assign(x, sppf_backward(r, cache, w));
      },
      slots, op_options(seed))};
}

// ---------------------------------------------------------------------------

Reports detector_suite(std::uint64_t seed) {
  DetectorConfig cfg = detector_preset("full");
  cfg.widths = {8, 8, 16, 16};
  cfg.image_size = 32;
  Detector model = build_detector(cfg, seed);
  Rng rng(seed + 6);
  // Perturb the zero offset/attention initialization so sampling runs off the
  // integer pixel grid.
  randomize_linear(model.csha.offset_head, rng, Real(0.05));
  randomize_linear(model.csha.attention_head, rng, Real(0.2));

  SceneConfig sc;
  sc.size = 32;
  sc.max_size = 6;
  sc.min_objects = 2;
  sc.seed = seed;
  const Scene scene = gen_scene(sc, 0);
  const FeatureMap images = stack_images({&scene});
  const Targets targets = assign_targets({scene.objects}, 2, 2);
  const RegLossConfig reg = cfg.reg_loss(average_object_size(scene.objects));

  ParamSlots slots = model.slots();
  GradCheckOptions opts;
  opts.tolerance = kEndToEndTolerance;
  opts.max_elements_per_slot = 6;
  opts.seed = seed;
  return {grad_check(
      "detector_end_to_end",
      [&] {
        return detection_loss(detector_forward(images, model, Mode::kTrain),
                              targets, reg)
            .total;
      },
      [&] {
        zero_grads(slots);
        DetectorCache cache;
        const FeatureMap head =
            detector_forward(images, model, Mode::kTrain, &cache);
        FeatureMap grad_head;
        detection_loss(head, targets, reg, &grad_head);
        detector_backward(grad_head, cache, model);
      },
      slots, opts)};
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
  return {"tensor", "rhwd", "grm", "csha", "losses", "sppf", "detector"};
}

std::vector<GradCheckReport> run_gradcheck(std::string_view module,
                                           std::uint64_t seed) {
  if (module == "all") {
    Reports all;
    for (const std::string& m : gradcheck_modules()) {
      for (GradCheckReport& r : run_gradcheck(m, seed)) all.push_back(std::move(r));
    }
    return all;
  }
  if (module == "tensor") return tensor_suite(seed);
  if (module == "rhwd") return rhwd_suite(seed);
  if (module == "grm") return grm_suite(seed);
  if (module == "csha") return csha_suite(seed);
  if (module == "losses") return losses_suite(seed);
  if (module == "sppf") return sppf_suite(seed);
  if (module == "detector") return detector_suite(seed);
  throw ConfigError("unknown gradcheck module \"" + std::string(module) + "\"");
}

}  // namespace tinydet
