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
#include <algorithm>
#include <functional>
#include <stdexcept>
#include <vector>

#include "plis/autodiff.hpp"

namespace plis {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Max over coordinates of |analytic - central| / (|central| + 1e-12), where
/// the analytic gradient comes from one backward pass of `f` at `x`.
///
/// `relative_floor` > 0 adds relative_floor * max_j |central_j| to every
/// denominator, so coordinates whose true derivative is many orders below the
/// gradient's scale are judged against that scale rather than against
/// central-difference rounding noise.
inline double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                                double relative_floor = 0.0) {
  Graph graph;
  const Tensor input = graph.leaf(x);
  const Tensor y = f(input);
  if (y.numel() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
  const Tensor analytic =
      y.graph() == &graph ? graph.backward(y, {input})[0] : Tensor::zeros(x.shape());

  std::vector<double> probe = x.values();
  std::vector<double> central(probe.size());
  for (std::size_t j = 0; j < probe.size(); ++j) {
    probe[j] = x[j] + h;
    const double plus = f(Tensor(x.shape(), probe)).item();
    probe[j] = x[j] - h;
    const double minus = f(Tensor(x.shape(), probe)).item();
    probe[j] = x[j];
    central[j] = (plus - minus) / (2.0 * h);
    if (!std::isfinite(central[j]) || !std::isfinite(analytic[j])) {
      throw std::runtime_error("finite_diff_check: non-finite value at coordinate " +
                               std::to_string(j));
    }
  }
  double scale = 0.0;
  for (double c : central) scale = std::max(scale, std::abs(c));
  double worst = 0.0;
  for (std::size_t j = 0; j < central.size(); ++j) {
    const double denom = std::abs(central[j]) + 1e-12 + relative_floor * scale;
    worst = std::max(worst, std::abs(analytic[j] - central[j]) / denom);
  }
  return worst;
}

}  // namespace plis
