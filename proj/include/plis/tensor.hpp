//
// Copyright 2026 The PLIS Lab Authors
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
//

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace plis {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Graph;

/// Dense row-major float64 array. A tensor is either a constant (detached)
/// or a handle onto a node of a Graph; the numeric payload is immutable and
/// shared between copies.
class Tensor {
 public:
  static constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values) {
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
      }
    }
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " holds " +
                                  std::to_string(shape_numel(shape)) + " values, got " +
                                  std::to_string(values.size()));
    }
    storage_ = std::make_shared<const Storage>(Storage{std::move(shape), std::move(values)});
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }
  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t numel() const { return storage_->values.size(); }
  std::span<const double> data() const { return storage_->values; }
  const std::vector<double>& values() const { return storage_->values; }
  double operator[](std::size_t i) const { return storage_->values[i]; }

  double item() const {
    if (numel() != 1) {
      throw std::invalid_argument("tensor: item() on shape " + shape_str(shape()));
    }
    return storage_->values[0];
  }

  bool attached() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::size_t node() const { return node_; }

  /// Same values, no graph identity.
  Tensor detach() const {
    Tensor t = *this;
    t.graph_ = nullptr;
    t.node_ = kNoNode;
    return t;
  }

  /// Values reinterpreted under a new shape of equal element count (no graph).
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), values()); }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
  };

  std::shared_ptr<const Storage> storage_;
  Graph* graph_ = nullptr;
  std::size_t node_ = kNoNode;

  friend class Graph;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace plis
