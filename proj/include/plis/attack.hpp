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
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/autodiff.hpp"
#include "plis/data.hpp"
#include "plis/dpsgd.hpp"
#include "plis/io.hpp"
#include "plis/models.hpp"
#include "plis/parallel.hpp"
#include "plis/rng.hpp"

namespace plis {

/// Release model for the observed gradient: clip to C, add N(0, (σC)²).
struct DpRelease {
  double clip = 1.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

inline Tensor observe_gradient(const ModelSpec& spec, const ParamSet& params, const SubjectRecord& s,
                               const std::optional<DpRelease>& dp = std::nullopt) {
  const Tensor g = per_sample_grad(spec, params, s.x, s.y);
  if (!dp) return g;
  if (!(dp->sigma >= 0.0)) throw std::invalid_argument("observe_gradient: sigma must be >= 0");
  const Tensor clipped = clip_differentiable(g, dp->clip);
  if (dp->sigma == 0.0) return clipped;
  CounterRng rng(dp->seed, 0x0B5E7EULL);
  return gaussian_noise_add(clipped, Tensor::vector(rng.normals(g.numel(), dp->sigma * dp->clip)));
}

enum class MatchLoss { cosine, l2 };

inline MatchLoss parse_match_loss(const std::string& name) {
  if (name == "cosine") return MatchLoss::cosine;
  if (name == "l2") return MatchLoss::l2;
  throw std::invalid_argument("unknown match loss '" + name + "' (expected cosine or l2)");
}

struct AttackConfig {
  std::size_t iterations = 300;
  double learning_rate = 0.05;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  double tv_weight = 0.0;
  MatchLoss match = MatchLoss::cosine;
  // Backtracking: a step is taken only if neither match loss nor objective grows.
  bool monotone = false;
  // Project the estimate onto [0, 1] after every step (image inputs).
  bool clamp_unit = true;
  // Starting point for every restart instead of the seeded Gaussian draw.
  std::optional<Tensor> init;
  std::size_t jobs = 1;

  void validate() const {
    if (iterations == 0) throw std::invalid_argument("attack: iterations must be >= 1");
    if (restarts == 0) throw std::invalid_argument("attack: restarts must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("attack: learning_rate must be > 0");
    if (!(tv_weight >= 0.0)) throw std::invalid_argument("attack: tv_weight must be >= 0");
  }
};

struct AttackResult {
  Tensor reconstruction;
  double match_loss = 0.0;
  std::size_t best_restart = 0;
  // traces[r][k] is the match loss of restart r before step k (k = 0 is the start).
  std::vector<std::vector<double>> traces;

  std::string trace_csv() const {
    CsvWriter csv({"iteration", "match_loss"});
    const auto& t = traces.at(best_restart);
    for (std::size_t k = 0; k < t.size(); ++k) csv.row({static_cast<double>(k), t[k]});
    return csv.str();
  }
};

namespace detail {

inline constexpr double kTvEps = 1e-6;

// Smooth anisotropic total variation over the last two axes:
// Σ sqrt(Δ² + eps) over vertical and horizontal neighbour differences.
inline double total_variation(const Tensor& x, std::vector<double>* grad) {
  const Shape& s = x.shape();
  const std::size_t h = s.size() >= 2 ? s[s.size() - 2] : 1;
  const std::size_t w = s.back();
  const std::size_t channels = x.numel() / (h * w);
  double tv = 0.0;
  if (grad) grad->assign(x.numel(), 0.0);
  auto term = [&](std::size_t a, std::size_t b) {
    const double d = x[b] - x[a];
    const double r = std::sqrt(d * d + kTvEps);
    tv += r;
    if (grad) {
      (*grad)[b] += d / r;
      (*grad)[a] -= d / r;
    }
  };
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t at = (c * h + i) * w + j;
        if (i + 1 < h) term(at, at + w);
        if (j + 1 < w) term(at, at + 1);
      }
  return tv;
}

struct Evaluation {
  double match = 0.0;
  double objective = 0.0;
  std::vector<double> grad;
};

inline Evaluation evaluate(const ModelSpec& spec, const ParamSet& params, const Tensor& x,
                           const Tensor& y, const Tensor& observed, const AttackConfig& cfg,
                           bool with_grad) {
  SampleTape tape(spec, params, x, y);
  const Tensor g = tape.param_grad(true);
  Tensor loss;
  if (cfg.match == MatchLoss::cosine) {
    const double obs_norm = l2_norm(observed.data());
    if (obs_norm == 0.0) throw std::invalid_argument("attack: observed gradient is zero");
    const Tensor unit = scale(observed, 1.0 / obs_norm);
    // 1 − ⟨g, o⟩ / ‖g‖; the tiny floor keeps a zero estimate finite.
    const Tensor gnorm = sqrt(add_scalar(squared_norm(g), 1e-300));
    loss = sub(Tensor::scalar(1.0), div(sum(mul(g, unit)), gnorm));
  } else {
    loss = squared_norm(sub(g, observed));
  }
  Evaluation e;
  e.match = loss.item();
  std::vector<double> tv_grad;
  const double tv = cfg.tv_weight > 0.0 ? total_variation(x, with_grad ? &tv_grad : nullptr) : 0.0;
  e.objective = e.match + cfg.tv_weight * tv;
  if (with_grad) {
    e.grad = tape.graph().backward(loss, {tape.x()})[0].values();
    if (cfg.tv_weight > 0.0) {
      for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] += cfg.tv_weight * tv_grad[i];
    }
  }
  return e;
}

struct RestartOutcome {
  Tensor estimate;
  double match = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  bool finite = false;
};

inline RestartOutcome run_restart(const ModelSpec& spec, const ParamSet& params, const Tensor& observed,
                                  const Tensor& y, const AttackConfig& cfg, std::size_t restart) {
  std::vector<double> x;
  if (cfg.init) {
    if (cfg.init->shape() != spec.input_shape) {
      throw std::invalid_argument("attack: init shape " + shape_str(cfg.init->shape()) +
                                  " != model input " + shape_str(spec.input_shape));
    }
    x = cfg.init->values();
  } else {
    x = CounterRng(cfg.seed, 0xA77AC000ULL + restart).normals(shape_numel(spec.input_shape));
    if (cfg.clamp_unit) {
      for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    }
  }
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0), v(n, 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  RestartOutcome out;
  auto at = [&](const std::vector<double>& values) { return Tensor(spec.input_shape, values); };
  Evaluation cur = evaluate(spec, params, at(x), y, observed, cfg, true);
  out.trace.push_back(cur.match);
  double step = cfg.learning_rate;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    if (!std::isfinite(cur.objective)) return out;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(it));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(it));
    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * cur.grad[i];
      v[i] = b2 * v[i] + (1 - b2) * cur.grad[i] * cur.grad[i];
      dir[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    auto propose = [&](double lr) {
      std::vector<double> next(n);
      for (std::size_t i = 0; i < n; ++i) {
        next[i] = x[i] - lr * dir[i];
        if (cfg.clamp_unit) next[i] = std::clamp(next[i], 0.0, 1.0);
      }
      return next;
    };
    if (!cfg.monotone) {
      x = propose(cfg.learning_rate);
      cur = evaluate(spec, params, at(x), y, observed, cfg, true);
    } else {
      for (int halving = 0; halving < 30; ++halving) {
        auto next = propose(step);
        const Evaluation trial = evaluate(spec, params, at(next), y, observed, cfg, false);
        if (trial.match <= cur.match && trial.objective <= cur.objective) {
          x = std::move(next);
          cur = evaluate(spec, params, at(x), y, observed, cfg, true);
          step = std::min(cfg.learning_rate, step * 2.0);
          break;
        }
        step *= 0.5;
      }
    }
    out.trace.push_back(cur.match);
  }
  out.finite = std::isfinite(cur.objective);
  out.match = cur.match;
  out.estimate = at(x);
  return out;
}

}  // namespace detail

/// Gradient inversion: minimizes match(∇_θ ℓ(x̂ | y), observed) + λ·TV(x̂)
/// over x̂ with Adam from each restart's start point; the restart with the
/// lowest final match loss wins.
inline AttackResult reconstruct(const ModelSpec& spec, const ParamSet& params, const Tensor& observed,
                                const Tensor& y, const AttackConfig& cfg) {
  cfg.validate();
  if (observed.numel() != params.size()) {
    throw std::invalid_argument("attack: observed gradient has " + std::to_string(observed.numel()) +
                                " entries, model has " + std::to_string(params.size()));
  }
  auto outcomes = parallel_map(cfg.restarts, cfg.jobs, [&](std::size_t r) {
    return detail::run_restart(spec, params, observed, y, cfg, r);
  });
  AttackResult result;
  bool any = false;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    result.traces.push_back(outcomes[r].trace);
    if (!outcomes[r].finite) continue;
    if (!any || outcomes[r].match < result.match_loss) {
      result.match_loss = outcomes[r].match;
      result.reconstruction = outcomes[r].estimate;
      result.best_restart = r;
      any = true;
    }
  }
  if (!any) throw std::runtime_error("attack: every restart produced a non-finite loss");
  return result;
}

}  // namespace plis
