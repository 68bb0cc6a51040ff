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

#include "tinydet/detector.h"

#include <algorithm>
#include <cmath>

namespace tinydet {
namespace {

constexpr ConvUnit::Options kPlainConv{.bias = true, .batch_norm = false,
                                       .activation = false};
constexpr ConvUnit::Options kBiasSilu{.bias = true, .batch_norm = false,
                                      .activation = true};

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<StemVariant> kStemNames[] = {
    {StemVariant::kRhwd, "rhwd"},
    {StemVariant::kLargeKernel, "largekernel"},
    {StemVariant::kFocus, "focus"}};
constexpr EnumName<GrmVariant> kGrmNames[] = {
    {GrmVariant::kNone, "none"},
    {GrmVariant::kPlainMhsa, "plain_mhsa"},
    {GrmVariant::kGrm, "grm"}};
constexpr EnumName<GrmPosition> kPositionNames[] = {
    {GrmPosition::kBeforeSppf, "before_sppf"},
    {GrmPosition::kAfterSppf, "after_sppf"}};
constexpr EnumName<LossVariant> kLossNames[] = {
    {LossVariant::kIouOnly, "iou_only"},
    {LossVariant::kIouPlusCenter, "iou_plus_center"}};

template <typename E, std::size_t N>
const char* to_name(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw ConfigError("unknown enum value");
}

template <typename E, std::size_t N>
E from_name(const EnumName<E> (&table)[N], const std::string& name,
            const char* field) {
  for (const auto& e : table) {
    if (name == e.name) return e.value;
  }
  throw ConfigError(std::string("config field ") + field + ": unknown value \"" +
                    name + "\"");
}

ConvUnit make_unit(int in, int out, int k, int stride, int pad,
                   ConvUnit::Options opts, Rng& rng) {
  ConvUnit u(in, out, k, stride, pad, opts);
  u.init(rng);
  return u;
}

bool has_grm(const DetectorConfig& c) { return c.grm != GrmVariant::kNone; }

FeatureMap apply_grm(const FeatureMap& x, Detector& m, DetectorCache* cache) {
  return grm_forward(x, m.grm, cache ? &cache->grm : nullptr);
}

Real bce_with_logits(Real z, Real y) {
  return std::max(z, Real(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

void DetectorConfig::validate() const {
  for (int w : widths) {
    if (w <= 0) throw ConfigError("detector widths must be positive");
  }
  if (image_size <= 0 || image_size % 32 != 0) {
    throw ConfigError("detector image_size must be a positive multiple of 32");
  }
  if (heads <= 0 || points <= 0) {
    throw ConfigError("detector heads and points must be positive");
  }
  if (has_grm(*this) && widths[3] % heads != 0) {
    throw ConfigError("P5 width must be divisible by the head count");
  }
  if (csha && widths[2] % heads != 0) {
    throw ConfigError("P4 width must be divisible by the head count");
  }
  if (alpha1 < 0 || alpha2 < 0) {
    throw ConfigError("alpha1 and alpha2 must be non-negative");
  }
  const Real a1 = loss == LossVariant::kIouOnly ? Real(0) : alpha1;
  if (!(a1 + alpha2 > 0)) {
    throw ConfigError("regression loss weights must not both be zero");
  }
}

RegLossConfig DetectorConfig::reg_loss(Real resolved_c) const {
  RegLossConfig r;
  r.alpha1 = loss == LossVariant::kIouOnly ? Real(0) : alpha1;
  r.alpha2 = alpha2;
  r.c = resolved_c;
  r.validate();
  return r;
}

nlohmann::json DetectorConfig::to_json() const {
  return {{"stem", to_name(kStemNames, stem)},
          {"grm", to_name(kGrmNames, grm)},
          {"grm_position", to_name(kPositionNames, grm_position)},
          {"csha", csha},
          {"loss", to_name(kLossNames, loss)},
          {"widths", widths},
          {"alpha1", alpha1},
          {"alpha2", alpha2},
          {"C", c},
          {"image_size", image_size},
          {"heads", heads},
          {"points", points}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
  static const char* kKnown[] = {"stem",  "grm",    "grm_position", "csha",
                                 "loss",  "widths", "alpha1",       "alpha2",
                                 "C",     "image_size", "heads",    "points",
                                 "preset"};
  if (!j.is_object()) throw ConfigError("detector config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ConfigError("unknown detector config field \"" + key + "\"");
    }
  }
  DetectorConfig c;
  if (j.contains("preset")) c = detector_preset(j.at("preset").get<std::string>());
  try {
    if (j.contains("stem"))
      c.stem = from_name(kStemNames, j.at("stem").get<std::string>(), "stem");
    if (j.contains("grm"))
      c.grm = from_name(kGrmNames, j.at("grm").get<std::string>(), "grm");
    if (j.contains("grm_position"))
      c.grm_position = from_name(kPositionNames,
                                 j.at("grm_position").get<std::string>(),
                                 "grm_position");
    if (j.contains("csha")) c.csha = j.at("csha").get<bool>();
    if (j.contains("loss"))
      c.loss = from_name(kLossNames, j.at("loss").get<std::string>(), "loss");
    if (j.contains("widths")) c.widths = j.at("widths").get<std::array<int, 4>>();
    if (j.contains("alpha1")) c.alpha1 = j.at("alpha1").get<Real>();
    if (j.contains("alpha2")) c.alpha2 = j.at("alpha2").get<Real>();
    if (j.contains("C")) {
      const auto& v = j.at("C");
      c.c = v.is_string() && v.get<std::string>() == "auto" ? Real(0)
                                                            : v.get<Real>();
    }
    if (j.contains("image_size")) c.image_size = j.at("image_size").get<int>();
    if (j.contains("heads")) c.heads = j.at("heads").get<int>();
    if (j.contains("points")) c.points = j.at("points").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  c.validate();
  return c;
}

DetectorConfig detector_preset(std::string_view name) {
  DetectorConfig c;
  c.stem = StemVariant::kLargeKernel;
  c.grm = GrmVariant::kNone;
  c.csha = false;
  c.loss = LossVariant::kIouOnly;
  if (name == "baseline" || name == "stem_largekernel") return c;
  if (name == "stem_focus") {
    c.stem = StemVariant::kFocus;
    return c;
  }
  c.stem = StemVariant::kRhwd;
  if (name == "rhwd") return c;
  if (name == "rhwd_mhsa") {
    c.grm = GrmVariant::kPlainMhsa;
    return c;
  }
  c.grm = GrmVariant::kGrm;
  if (name == "rhwd_grm") return c;
  if (name == "rhwd_grm_before_sppf") {
    c.grm_position = GrmPosition::kBeforeSppf;
    return c;
  }
  c.csha = true;
  if (name == "rhwd_grm_csha") return c;
  c.loss = LossVariant::kIouPlusCenter;
  if (name == "full") return c;
  throw ConfigError("unknown detector preset \"" + std::string(name) + "\"");
}

std::vector<std::string> detector_preset_names() {
  return {"baseline",  "stem_largekernel",     "stem_focus",   "rhwd",
          "rhwd_mhsa", "rhwd_grm",             "rhwd_grm_before_sppf",
          "rhwd_grm_csha", "full"};
}

std::vector<std::string> ablation_ladder() {
  return {"baseline", "rhwd", "rhwd_grm", "rhwd_grm_csha", "full"};
}

ParamSlots Detector::slots() {
  ParamSlots out;
  stem.collect(out, "stem.");
  stage3a.collect(out, "stage3a.");
  stage3b.collect(out, "stage3b.");
  stage4a.collect(out, "stage4a.");
  stage4b.collect(out, "stage4b.");
  stage5a.collect(out, "stage5a.");
  stage5b.collect(out, "stage5b.");
  sppf.collect(out, "sppf.");
  if (has_grm(config)) grm.collect(out, "grm.");
  if (config.csha) csha.collect(out, "csha.");
  lateral5.collect(out, "lateral5.");
  lateral3.collect(out, "lateral3.");
  downsample.collect(out, "downsample.");
  head_hidden.collect(out, "head_hidden.");
  head_out.collect(out, "head_out.");
  return out;
}

Detector build_detector(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto [w0, w3, w4, w5] = config.widths;
  const ConvUnit::Options bn_silu{};
  Detector m;
  m.config = config;
  m.stem = StemWeights::make(config.stem, 3, w0, rng);
  m.stage3a = make_unit(w0, w0, 4, 2, 1, bn_silu, rng);
  m.stage3b = make_unit(w0, w3, 4, 2, 1, bn_silu, rng);
  m.stage4a = make_unit(w3, w4, 4, 2, 1, bn_silu, rng);
  m.stage4b = make_unit(w4, w4, 3, 1, 1, bn_silu, rng);
  m.stage5a = make_unit(w4, w5, 4, 2, 1, bn_silu, rng);
  m.stage5b = make_unit(w5, w5, 3, 1, 1, bn_silu, rng);
  m.sppf = SppfWeights::make(w5, rng);
  if (has_grm(config)) {
    const int p5 = config.image_size / 32;
    m.grm = GrmWeights::make(w5, p5, p5, config.heads,
                             config.grm == GrmVariant::kGrm, rng);
  }
  if (config.csha) {
    CshaConfig cc;
    cc.in_channels = {w3, w4, w5};
    cc.d_model = w4;
    cc.out_channels = w4;
    cc.heads = config.heads;
    cc.points = config.points;
    m.csha = CshaWeights::make(cc, rng);
  }
  m.lateral5 = make_unit(w5, w4, 1, 1, 0, kPlainConv, rng);
  m.lateral3 = make_unit(w3, w4, 1, 1, 0, kPlainConv, rng);
  m.downsample = make_unit(w4, w4, 4, 2, 1, bn_silu, rng);
  m.head_hidden = make_unit(w4, w4, 3, 1, 1, kBiasSilu, rng);
  m.head_out = make_unit(w4, kHeadChannels, 1, 1, 0, kPlainConv, rng);
  return m;
}

FeatureMap detector_forward(const FeatureMap& images, Detector& m, Mode mode,
                            DetectorCache* cache) {
  if (images.channels() != 3 || images.height() != m.config.image_size ||
      images.width() != m.config.image_size) {
    throw GeometryError("detector expects (b, 3, " +
                        std::to_string(m.config.image_size) + ", " +
                        std::to_string(m.config.image_size) + ") input, got " +
                        shape_string(images));
  }
  DetectorCache* c = cache;
  auto unit = [&](const FeatureMap& x, ConvUnit& u, ConvUnitCache DetectorCache::*slot) {
    return conv_unit_forward(x, u, mode, c ? &(c->*slot) : nullptr);
  };

  const FeatureMap s = stem_forward(images, m.stem, mode, c ? &c->stem : nullptr);
  const FeatureMap p3 = unit(unit(s, m.stage3a, &DetectorCache::stage3a),
                             m.stage3b, &DetectorCache::stage3b);
  const FeatureMap p4 = unit(unit(p3, m.stage4a, &DetectorCache::stage4a),
                             m.stage4b, &DetectorCache::stage4b);
  FeatureMap p5 = unit(unit(p4, m.stage5a, &DetectorCache::stage5a),
                       m.stage5b, &DetectorCache::stage5b);

  const bool grm = has_grm(m.config);
  if (grm && m.config.grm_position == GrmPosition::kBeforeSppf) {
    p5 = apply_grm(p5, m, c);
  }
  p5 = sppf_forward(p5, m.sppf, mode, c ? &c->sppf : nullptr);
  if (grm && m.config.grm_position == GrmPosition::kAfterSppf) {
    p5 = apply_grm(p5, m, c);
  }

  FeatureMap m4 = m.config.csha
                      ? csha_forward(p3, p4, p5, m.csha, c ? &c->csha : nullptr)
                      : p4;
  add_inplace(m4, upsample_nearest2x(unit(p5, m.lateral5, &DetectorCache::lateral5)));
  FeatureMap m3 = unit(p3, m.lateral3, &DetectorCache::lateral3);
  add_inplace(m3, upsample_nearest2x(m4));
  FeatureMap merged = unit(m3, m.downsample, &DetectorCache::downsample);
  add_inplace(merged, m4);
  return unit(unit(merged, m.head_hidden, &DetectorCache::head_hidden),
              m.head_out, &DetectorCache::head_out);
}

FeatureMap detector_backward(const FeatureMap& grad_head,
                             const DetectorCache& c, Detector& m) {
  const FeatureMap g_merged = conv_unit_backward(
      conv_unit_backward(grad_head, c.head_out, m.head_out), c.head_hidden,
      m.head_hidden);
  FeatureMap g_m4 = g_merged;
  const FeatureMap g_m3 = conv_unit_backward(g_merged, c.downsample, m.downsample);
  FeatureMap g_p3 = conv_unit_backward(g_m3, c.lateral3, m.lateral3);
  add_inplace(g_m4, upsample_nearest2x_backward(g_m3));
  FeatureMap g_p5 = conv_unit_backward(upsample_nearest2x_backward(g_m4),
                                       c.lateral5, m.lateral5);
  FeatureMap g_p4;
  if (m.config.csha) {
    std::array<FeatureMap, kCshaLevels> g = csha_backward(g_m4, c.csha, m.csha);
    add_inplace(g_p3, g[0]);
    g_p4 = std::move(g[1]);
    add_inplace(g_p5, g[2]);
  } else {
    g_p4 = std::move(g_m4);
  }

  const bool grm = has_grm(m.config);
  if (grm && m.config.grm_position == GrmPosition::kAfterSppf) {
    g_p5 = grm_backward(g_p5, c.grm, m.grm);
  }
  g_p5 = sppf_backward(g_p5, c.sppf, m.sppf);
  if (grm && m.config.grm_position == GrmPosition::kBeforeSppf) {
    g_p5 = grm_backward(g_p5, c.grm, m.grm);
  }

  add_inplace(g_p4, conv_unit_backward(
                        conv_unit_backward(g_p5, c.stage5b, m.stage5b),
                        c.stage5a, m.stage5a));
  add_inplace(g_p3, conv_unit_backward(
                        conv_unit_backward(g_p4, c.stage4b, m.stage4b),
                        c.stage4a, m.stage4a));
  const FeatureMap g_s = conv_unit_backward(
      conv_unit_backward(g_p3, c.stage3b, m.stage3b), c.stage3a, m.stage3a);
  return stem_backward(g_s, c.stem, m.stem);
}

void center_box_init(Detector& m, Real box_size) {
  if (!(box_size > 0)) throw ConfigError("center_box_init: size must be > 0");
  Tensor<4>& k = m.head_out.kernel.value;
  for (int o = 1; o < kHeadChannels; ++o) {
    for (int i = 0; i < k.extent(1); ++i) k(o, i, 0, 0) = 0;
  }
  Real* bias = m.head_out.bias.value.data();
  bias[1] = 0;
  bias[2] = 0;
  bias[3] = bias[4] = std::log(box_size / kHeadStride);
}

int Targets::positives() const {
  return static_cast<int>(std::count(positive.begin(), positive.end(), 1));
}

Targets assign_targets(const std::vector<std::vector<GroundTruth>>& gts,
                       int height, int width, int stride) {
  if (height <= 0 || width <= 0 || stride <= 0) {
    throw GeometryError("assign_targets: empty head geometry");
  }
  Targets t;
  t.batch = static_cast<int>(gts.size());
  t.height = height;
  t.width = width;
  t.stride = stride;
  t.positive.assign(static_cast<std::size_t>(t.batch) * height * width, 0);
  t.boxes.assign(t.positive.size(), Box{});
  for (int b = 0; b < t.batch; ++b) {
    for (const GroundTruth& g : gts[b]) {
      const int j = std::clamp(
          static_cast<int>(std::floor(g.box.center_x() / stride)), 0, width - 1);
      const int i = std::clamp(
          static_cast<int>(std::floor(g.box.center_y() / stride)), 0, height - 1);
      const std::size_t idx = t.index(b, i, j);
      if (t.positive[idx] && t.boxes[idx].area() >= g.box.area()) continue;
      t.positive[idx] = 1;
      t.boxes[idx] = g.box;
    }
  }
  return t;
}

Box decode_cell(const FeatureMap& head, int b, int i, int j, int stride) {
  const Real s = static_cast<Real>(stride);
  const Real cx = (j + sigmoid(head(b, 1, i, j))) * s;
  const Real cy = (i + sigmoid(head(b, 2, i, j))) * s;
  const Real w = std::exp(std::clamp(head(b, 3, i, j), kLogSizeMin, kLogSizeMax)) * s;
  const Real h = std::exp(std::clamp(head(b, 4, i, j), kLogSizeMin, kLogSizeMax)) * s;
  return Box::from_center(cx, cy, w, h);
}

LossBreakdown detection_loss(const FeatureMap& head, const Targets& t,
                             const RegLossConfig& reg, FeatureMap* grad_head) {
  if (head.batch() != t.batch || head.channels() != kHeadChannels ||
      head.height() != t.height || head.width() != t.width) {
    throw GeometryError("detection_loss: head " + shape_string(head) +
                        " does not match targets");
  }
  reg.validate();
  if (grad_head) *grad_head = FeatureMap(head.extents());
  LossBreakdown out;
  out.positives = t.positives();
  const Real cells = static_cast<Real>(t.positive.size());
  const Real npos = static_cast<Real>(std::max(1, out.positives));
  const Real s = static_cast<Real>(t.stride);

  for (int b = 0; b < t.batch; ++b) {
    for (int i = 0; i < t.height; ++i) {
      for (int j = 0; j < t.width; ++j) {
        const std::size_t idx = t.index(b, i, j);
        const Real y = t.positive[idx] ? Real(1) : Real(0);
        const Real z = head(b, 0, i, j);
        out.objectness += bce_with_logits(z, y) / cells;
        if (grad_head) (*grad_head)(b, 0, i, j) = (sigmoid(z) - y) / cells;
        if (!t.positive[idx]) continue;

        const Box pred = decode_cell(head, b, i, j, t.stride);
        out.regression += regression_loss(pred, t.boxes[idx], reg) / npos;
        if (!grad_head) continue;
        const std::array<Real, 4> g = regression_loss_grad(pred, t.boxes[idx], reg);
        const Real g_cx = g[0] + g[2];
        const Real g_cy = g[1] + g[3];
        const Real g_w = (g[2] - g[0]) / 2;
        const Real g_h = (g[3] - g[1]) / 2;
        const Real sx = sigmoid(head(b, 1, i, j));
        const Real sy = sigmoid(head(b, 2, i, j));
        const Real tw = head(b, 3, i, j);
        const Real th = head(b, 4, i, j);
        const bool w_free = tw > kLogSizeMin && tw < kLogSizeMax;
        const bool h_free = th > kLogSizeMin && th < kLogSizeMax;
        (*grad_head)(b, 1, i, j) = g_cx * s * sx * (1 - sx) / npos;
        (*grad_head)(b, 2, i, j) = g_cy * s * sy * (1 - sy) / npos;
        (*grad_head)(b, 3, i, j) = w_free ? g_w * pred.width() / npos : Real(0);
        (*grad_head)(b, 4, i, j) = h_free ? g_h * pred.height() / npos : Real(0);
      }
    }
  }
  out.total = out.objectness + out.regression;
  return out;
}

std::vector<Detection> nms(std::vector<Detection> dets, Real iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    const bool suppressed = std::any_of(
        kept.begin(), kept.end(), [&](const Detection& k) {
          return k.image_id == d.image_id && k.class_id == d.class_id &&
                 iou(k.box, d.box) > iou_threshold;
        });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> decode_detections(const FeatureMap& head,
                                         Real score_threshold,
                                         Real nms_threshold, int first_image_id,
                                         int stride) {
  if (head.channels() != kHeadChannels) {
    throw GeometryError("decode_detections: head must have 5 channels");
  }
  std::vector<Detection> out;
  for (int b = 0; b < head.batch(); ++b) {
    std::vector<Detection> dets;
    for (int i = 0; i < head.height(); ++i) {
      for (int j = 0; j < head.width(); ++j) {
        const Real score = sigmoid(head(b, 0, i, j));
        if (score < score_threshold) continue;
        dets.push_back({decode_cell(head, b, i, j, stride), score, 1,
                        first_image_id + b});
      }
    }
    for (const Detection& d : nms(std::move(dets), nms_threshold)) {
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Detection> predict_and_decode(Detector& model,
                                          const FeatureMap& images,
                                          Real score_threshold,
                                          Real nms_threshold,
                                          int first_image_id) {
  const FeatureMap head = detector_forward(images, model, Mode::kInfer);
  return decode_detections(head, score_threshold, nms_threshold, first_image_id);
}

}  // namespace tinydet
