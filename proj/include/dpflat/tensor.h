// Copyright 2026 The dpflat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPFLAT_TENSOR_H_
#define DPFLAT_TENSOR_H_

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpflat/errors.h"

namespace dpflat {

// Dense row-major tensor of doubles. The element count always equals the
// product of the shape; a default-constructed tensor has shape {0} and no
// data, which is how absent (masked-out) entries are represented.
class Tensor {
 public:
  Tensor() : shape_{0} {}

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(Count(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != Count(shape_)) {
      throw ConfigError("tensor data length does not match shape");
    }
  }

  static Tensor Vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor ZerosLike(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessor; valid only for rank-2 tensors.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  bool AllFinite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double SquaredNorm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double Norm() const { return std::sqrt(SquaredNorm()); }

  Tensor& operator+=(const Tensor& o) {
    CheckShape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    CheckShape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  // this += alpha * o
  void Axpy(double alpha, const Tensor& o) {
    CheckShape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * o.data_[i];
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static std::size_t Count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  void CheckShape(const Tensor& o) const {
    if (shape_ != o.shape_) throw ConfigError("tensor shape mismatch");
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
inline Tensor operator*(double s, Tensor a) { return a *= s; }

inline double Dot(const Tensor& a, const Tensor& b) {
  if (!a.SameShape(b)) throw ConfigError("tensor shape mismatch in dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// An ordered list of tensors. Entries may be empty tensors (absent slots).
using TensorSet = std::vector<Tensor>;

inline double SquaredNorm(const TensorSet& set) {
  double s = 0.0;
  for (const Tensor& t : set) s += t.SquaredNorm();
  return s;
}

inline double Norm(const TensorSet& set) { return std::sqrt(SquaredNorm(set)); }

inline bool AllFinite(const TensorSet& set) {
  for (const Tensor& t : set) {
    if (!t.AllFinite()) return false;
  }
  return true;
}

inline TensorSet ZerosLike(const TensorSet& set) {
  TensorSet out;
  out.reserve(set.size());
  for (const Tensor& t : set) out.push_back(Tensor::ZerosLike(t));
  return out;
}

// a += alpha * b, slot by slot. Empty slots are skipped.
inline void Axpy(TensorSet& a, double alpha, const TensorSet& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].empty() || b[i].empty()) continue;
    a[i].Axpy(alpha, b[i]);
  }
}

inline void Scale(TensorSet& a, double s) {
  for (Tensor& t : a) t *= s;
}

inline double Dot(const TensorSet& a, const TensorSet& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].empty() || b[i].empty()) continue;
    s += Dot(a[i], b[i]);
  }
  return s;
}

// Concatenates all non-empty slots into one flat vector.
inline std::vector<double> Flatten(const TensorSet& set) {
  std::vector<double> out;
  for (const Tensor& t : set) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
  return out;
}

}  // namespace dpflat

#endif  // DPFLAT_TENSOR_H_
