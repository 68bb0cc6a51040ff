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

#include "tinydet/boxes.h"

#include <algorithm>
#include <cmath>

namespace tinydet {

Real iou(const Box& a, const Box& b) {
  const Real iw = std::max(Real(0), std::min(a.x_max, b.x_max) -
                                        std::max(a.x_min, b.x_min));
  const Real ih = std::max(Real(0), std::min(a.y_max, b.y_max) -
                                        std::max(a.y_min, b.y_min));
  const Real inter = iw * ih;
  const Real uni = a.area() + b.area() - inter;
  if (!(uni > 0)) return Real(0);
  return inter / uni;
}

Real center_distance(const Box& a, const Box& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

Real center_assisted_loss(const Box& pred, const Box& gt, Real c) {
  if (!(c > 0)) throw ConfigError("center_assisted_loss: C must be > 0");
  return -std::expm1(-center_distance(pred, gt) / c);
}

void RegLossConfig::validate() const {
  if (alpha1 < 0 || alpha2 < 0) {
    throw ConfigError("regression loss weights must be non-negative");
  }
  if (!(alpha1 + alpha2 > 0)) {
    throw ConfigError("regression loss weights must not both be zero");
  }
  if (!(c > 0)) throw ConfigError("regression loss C must be > 0");
}

Real regression_loss(const Box& pred, const Box& gt, const RegLossConfig& cfg) {
  cfg.validate();
  Real loss = cfg.alpha2 * (Real(1) - iou(pred, gt));
  if (cfg.alpha1 > 0) loss += cfg.alpha1 * center_assisted_loss(pred, gt, cfg.c);
  return loss;
}

std::array<Real, 4> regression_loss_grad(const Box& pred, const Box& gt,
                                         const RegLossConfig& cfg) {
  cfg.validate();
  std::array<Real, 4> g{0, 0, 0, 0};

  // IoU term. Intersection edges: left = max(x_min), right = min(x_max), ...
  const Real left = std::max(pred.x_min, gt.x_min);
  const Real right = std::min(pred.x_max, gt.x_max);
  const Real top = std::max(pred.y_min, gt.y_min);
  const Real bottom = std::min(pred.y_max, gt.y_max);
  const Real iw = right - left;
  const Real ih = bottom - top;
  if (cfg.alpha2 > 0 && iw > 0 && ih > 0) {
    const Real inter = iw * ih;
    const Real uni = pred.area() + gt.area() - inter;
    // d inter / d pred coordinate (zero where gt owns the edge).
    const std::array<Real, 4> d_inter{
        pred.x_min > gt.x_min ? -ih : Real(0),
        pred.y_min > gt.y_min ? -iw : Real(0),
        pred.x_max < gt.x_max ? ih : Real(0),
        pred.y_max < gt.y_max ? iw : Real(0)};
    const std::array<Real, 4> d_area{-pred.height(), -pred.width(),
                                     pred.height(), pred.width()};
    for (int i = 0; i < 4; ++i) {
      const Real d_union = d_area[i] - d_inter[i];
      const Real d_iou = (d_inter[i] * uni - inter * d_union) / (uni * uni);
      g[i] -= cfg.alpha2 * d_iou;
    }
  }

  // Center term.
  if (cfg.alpha1 > 0) {
    const Real dx = pred.center_x() - gt.center_x();
    const Real dy = pred.center_y() - gt.center_y();
    const Real d = std::hypot(dx, dy);
    if (d > 0) {
      const Real dl_dd = std::exp(-d / cfg.c) / cfg.c;
      const Real gx = cfg.alpha1 * dl_dd * dx / d / 2;
      const Real gy = cfg.alpha1 * dl_dd * dy / d / 2;
      g[0] += gx;
      g[2] += gx;
      g[1] += gy;
      g[3] += gy;
    }
  }
  return g;
}

}  // namespace tinydet
