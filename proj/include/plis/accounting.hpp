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

// Rényi and Gaussian DP for the Gaussian mechanism. No subsampling
// amplification: every step is a Gaussian mechanism over a disclosed batch.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/io.hpp"

namespace plis {

struct GaussianMechanismParams {
  double sensitivity = 0.0;  // Δ, L2 units of the query
  double sigma = 1.0;        // noise standard deviation

  void validate() const {
    if (!(sensitivity >= 0.0) || !std::isfinite(sensitivity)) {
      throw std::invalid_argument("gaussian mechanism: sensitivity must be finite and >= 0");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("gaussian mechanism: sigma must be finite and > 0");
    }
  }

  double snr_squared() const { return (sensitivity / sigma) * (sensitivity / sigma); }
};

/// ρ = (α/2) Δ²/σ².
inline double rdp_of_gaussian(const GaussianMechanismParams& p, double alpha) {
  p.validate();
  if (!(alpha >= 1.0)) throw std::invalid_argument("rdp_of_gaussian: alpha must be >= 1");
  return 0.5 * alpha * p.snr_squared();
}

/// μ = Δ/σ.
inline double gdp_of_gaussian(const GaussianMechanismParams& p) {
  p.validate();
  return p.sensitivity / p.sigma;
}

/// {1 + k/2 : k = 1..254} ∪ {256, 512}.
inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  grid.reserve(256);
  for (int k = 1; k <= 254; ++k) grid.push_back(1.0 + k / 2.0);
  grid.push_back(256.0);
  grid.push_back(512.0);
  return grid;
}

class AccountantState {
 public:
  explicit AccountantState(std::vector<double> alpha_grid = default_alpha_grid())
      : alpha_grid_(std::move(alpha_grid)) {
    if (alpha_grid_.empty()) throw std::invalid_argument("accountant: empty alpha grid");
    for (std::size_t i = 0; i < alpha_grid_.size(); ++i) {
      if (!(alpha_grid_[i] > 1.0) || (i > 0 && !(alpha_grid_[i] > alpha_grid_[i - 1]))) {
        throw std::invalid_argument("accountant: alpha grid must be strictly increasing and > 1");
      }
    }
  }

  void add_step(const GaussianMechanismParams& p) {
    p.validate();
    steps_.push_back(p);
  }

  const std::vector<GaussianMechanismParams>& steps() const { return steps_; }
  const std::vector<double>& alpha_grid() const { return alpha_grid_; }
  bool empty() const { return steps_.empty(); }

 private:
  std::vector<GaussianMechanismParams> steps_;
  std::vector<double> alpha_grid_;
};

struct Composition {
  std::vector<double> rho;  // one per alpha_grid entry
  double mu_total = 0.0;
};

namespace detail {

// Σ Δ²/σ² summed in sorted order, so the result does not depend on step order.
inline double total_snr_squared(const std::vector<GaussianMechanismParams>& steps) {
  std::vector<double> terms;
  terms.reserve(steps.size());
  for (const auto& s : steps) terms.push_back(s.snr_squared());
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

}  // namespace detail

/// Additive RDP composition; GDP composes as the root-sum-square of μ_i.
inline Composition compose(const AccountantState& state) {
  if (state.empty()) throw std::invalid_argument("compose: no steps recorded");
  const double total = detail::total_snr_squared(state.steps());
  Composition c;
  c.rho.reserve(state.alpha_grid().size());
  for (double alpha : state.alpha_grid()) c.rho.push_back(0.5 * alpha * total);
  c.mu_total = std::sqrt(total);
  return c;
}

struct EpsilonResult {
  double epsilon = 0.0;
  double alpha = 0.0;  // grid point attaining the minimum
};

namespace detail {

inline EpsilonResult epsilon_from_total(double total_snr_sq, const std::vector<double>& grid,
                                        double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("epsilon_from_rdp: delta must be in (0, 1)");
  const double log_inv_delta = std::log(1.0 / delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), grid.front()};
  for (double alpha : grid) {
    const double eps = 0.5 * alpha * total_snr_sq + log_inv_delta / (alpha - 1.0);
    if (eps < best.epsilon) best = {eps, alpha};
  }
  return best;
}

}  // namespace detail

/// ε = min over the grid of ρ(α) + ln(1/δ)/(α − 1).
inline EpsilonResult epsilon_from_rdp(const AccountantState& state, double delta) {
  if (state.empty()) throw std::invalid_argument("epsilon_from_rdp: no steps recorded");
  return detail::epsilon_from_total(detail::total_snr_squared(state.steps()), state.alpha_grid(), delta);
}

/// Smallest noise multiplier σ (noise sd σ·C on a sum with sensitivity C) such
/// that `steps` compositions stay within (epsilon, delta). Bisection over
/// [1e-4, 1e6] to a relative width of 1e-12.
inline double sigma_for_budget(double epsilon, double delta, std::size_t steps, double clip,
                               const std::vector<double>& alpha_grid = default_alpha_grid()) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sigma_for_budget: epsilon must be > 0");
  if (steps == 0) throw std::invalid_argument("sigma_for_budget: steps must be >= 1");
  if (!(clip > 0.0)) throw std::invalid_argument("sigma_for_budget: clip must be > 0");
  auto eps_at = [&](double sigma) {
    const double per_step = (clip / (sigma * clip)) * (clip / (sigma * clip));
    return detail::epsilon_from_total(per_step * static_cast<double>(steps), alpha_grid, delta).epsilon;
  };
  double lo = 1e-4, hi = 1e6;
  if (eps_at(hi) > epsilon) {
    throw std::invalid_argument("sigma_for_budget: (" + format_double(epsilon) + ", " +
                                format_double(delta) + ") unattainable with " +
                                std::to_string(steps) + " steps for sigma <= 1e6");
  }
  if (eps_at(lo) <= epsilon) return lo;
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    (eps_at(mid) <= epsilon ? hi : lo) = mid;
  }
  return hi;
}

/// Per-step report: step, delta_step (Δ), sigma_step, ρ at the argmin α of the
/// cumulative ε, cumulative ε, cumulative μ.
inline std::string accountant_csv(const AccountantState& state, double delta) {
  CsvWriter csv({"step", "delta_step", "sigma_step", "rho_at_argmin_alpha", "cumulative_epsilon",
                 "mu_total"});
  double total = 0.0;
  for (std::size_t i = 0; i < state.steps().size(); ++i) {
    const auto& s = state.steps()[i];
    total += s.snr_squared();
    const auto best = detail::epsilon_from_total(total, state.alpha_grid(), delta);
    csv.row({static_cast<double>(i + 1), s.sensitivity, s.sigma, 0.5 * best.alpha * total,
             best.epsilon, std::sqrt(total)});
  }
  return csv.str();
}

}  // namespace plis
