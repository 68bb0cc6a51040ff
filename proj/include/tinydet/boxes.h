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

#ifndef TINYDET_BOXES_H_
#define TINYDET_BOXES_H_

#include <array>

#include "tinydet/tensor.h"

namespace tinydet {

// Axis-aligned rectangle in pixel coordinates, corner form.
struct Box {
  Real x_min = 0;
  Real y_min = 0;
  Real x_max = 0;
  Real y_max = 0;

  static Box from_xywh(Real x, Real y, Real w, Real h) {
    return {x, y, x + w, y + h};
  }
  static Box from_center(Real cx, Real cy, Real w, Real h) {
    return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  }

  Real width() const { return x_max - x_min; }
  Real height() const { return y_max - y_min; }
  Real area() const { return width() * height(); }
  Real center_x() const { return (x_min + x_max) / 2; }
  Real center_y() const { return (y_min + y_max) / 2; }
  bool valid() const { return x_max >= x_min && y_max >= y_min; }

  friend bool operator==(const Box&, const Box&) = default;
};

// 0 when the union is empty (two zero-area boxes).
Real iou(const Box& a, const Box& b);

// Euclidean distance between box centers.
Real center_distance(const Box& a, const Box& b);

// 1 - exp(-D / c), D the center distance. Throws ConfigError if c <= 0.
Real center_assisted_loss(const Box& pred, const Box& gt, Real c);

struct RegLossConfig {
  Real alpha1 = Real(0.5);  // center-assisted term
  Real alpha2 = Real(0.5);  // IoU term
  Real c = Real(1);         // average object size, pixels

  void validate() const;
};

// alpha1 * center_assisted_loss + alpha2 * (1 - IoU).
Real regression_loss(const Box& pred, const Box& gt, const RegLossConfig& cfg);

// Gradient w.r.t. (x_min, y_min, x_max, y_max) of pred.
std::array<Real, 4> regression_loss_grad(const Box& pred, const Box& gt,
                                         const RegLossConfig& cfg);

}  // namespace tinydet

#endif  // TINYDET_BOXES_H_
