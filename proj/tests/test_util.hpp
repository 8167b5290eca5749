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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "plis/rng.hpp"
#include "plis/tensor.hpp"

namespace plis::testing {

inline Tensor random_tensor(CounterRng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

/// Uniform in [lo, hi] with magnitude at least `gap`, for kink-sensitive ops.
inline Tensor random_away_from_zero(CounterRng& rng, Shape shape, double gap = 0.1,
                                    double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    const double mag = rng.uniform(gap, hi);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor(std::move(shape), std::move(v));
}

inline double max_rel_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace plis::testing
