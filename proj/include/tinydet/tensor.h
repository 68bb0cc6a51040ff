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

#ifndef TINYDET_TENSOR_H_
#define TINYDET_TENSOR_H_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinydet {

#ifdef TINYDET_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

// Raised when a caller-supplied configuration value is invalid (bad epsilon,
// channel mismatch, out-of-range threshold, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when spatial extents violate a geometric contract (odd extents for
// the Haar transform, pyramid stride mismatch, token-count mismatch, ...).
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { kTrain, kInfer };

// Dense row-major array of fixed rank. Value semantics; copying copies data.
template <std::size_t R>
class Tensor {
 public:
  using Extents = std::array<int, R>;

  Tensor() { extents_.fill(0); }

  explicit Tensor(const Extents& extents, Real fill = Real(0))
      : extents_(extents) {
    for (std::size_t i = 0; i < R; ++i) {
      if (extents_[i] < 0) {
        throw GeometryError("negative tensor extent at axis " +
                            std::to_string(i));
      }
    }
    data_.assign(count(extents_), fill);
  }

  Tensor(const Extents& extents, std::vector<Real> values)
      : extents_(extents), data_(std::move(values)) {
    if (data_.size() != count(extents_)) {
      throw GeometryError("tensor value count does not match extents");
    }
  }

  static constexpr std::size_t rank() { return R; }
  const Extents& extents() const { return extents_; }
  int extent(std::size_t axis) const { return extents_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& storage() { return data_; }

  Real& operator[](std::size_t flat) { return data_[flat]; }
  Real operator[](std::size_t flat) const { return data_[flat]; }

  template <typename... Idx>
    requires(sizeof...(Idx) == R)
  Real& operator()(Idx... idx) {
    return data_[offset(static_cast<int>(idx)...)];
  }

  template <typename... Idx>
    requires(sizeof...(Idx) == R)
  Real operator()(Idx... idx) const {
    return data_[offset(static_cast<int>(idx)...)];
  }

  template <typename... Idx>
    requires(sizeof...(Idx) == R)
  std::size_t offset(Idx... idx) const {
    const std::array<int, R> index{static_cast<int>(idx)...};
    std::size_t flat = 0;
    for (std::size_t i = 0; i < R; ++i) {
      flat = flat * static_cast<std::size_t>(extents_[i]) +
             static_cast<std::size_t>(index[i]);
    }
    return flat;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(Real(0)); }

  bool same_shape(const Tensor& other) const {
    return extents_ == other.extents_;
  }

  // FeatureMap accessors, layout (batch, channel, height, width).
  int batch() const
    requires(R == 4)
  {
    return extents_[0];
  }
  int channels() const
    requires(R == 4)
  {
    return extents_[1];
  }
  int height() const
    requires(R == 4)
  {
    return extents_[2];
  }
  int width() const
    requires(R == 4)
  {
    return extents_[3];
  }
  std::size_t plane_size() const
    requires(R == 4)
  {
    return static_cast<std::size_t>(extents_[2]) * extents_[3];
  }
  Real* plane(int b, int c)
    requires(R == 4)
  {
    return data_.data() +
           (static_cast<std::size_t>(b) * extents_[1] + c) * plane_size();
  }
  const Real* plane(int b, int c) const
    requires(R == 4)
  {
    return data_.data() +
           (static_cast<std::size_t>(b) * extents_[1] + c) * plane_size();
  }

  // TokenSequence accessors, layout (batch, token, channel).
  int tokens() const
    requires(R == 3)
  {
    return extents_[1];
  }
  int features() const
    requires(R == 3)
  {
    return extents_[2];
  }
  Real* row(int b, int t)
    requires(R == 3)
  {
    return data_.data() +
           (static_cast<std::size_t>(b) * extents_[1] + t) * extents_[2];
  }
  const Real* row(int b, int t) const
    requires(R == 3)
  {
    return data_.data() +
           (static_cast<std::size_t>(b) * extents_[1] + t) * extents_[2];
  }

 private:
  static std::size_t count(const Extents& e) {
    std::size_t n = 1;
    for (int v : e) n *= static_cast<std::size_t>(v);
    return n;
  }

  Extents extents_;
  std::vector<Real> data_;
};

using FeatureMap = Tensor<4>;     // (batch, channel, height, width)
using TokenSequence = Tensor<3>;  // (batch, token, channel)
using Matrix = Tensor<2>;
using Vector = Tensor<1>;

inline std::string shape_string(std::span<const int> extents) {
  std::string s = "(";
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(extents[i]);
  }
  return s + ")";
}

template <std::size_t R>
std::string shape_string(const Tensor<R>& t) {
  return shape_string(std::span<const int>(t.extents()));
}

template <std::size_t R>
bool all_finite(const Tensor<R>& t) {
  for (Real v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace tinydet

#endif  // TINYDET_TENSOR_H_
