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
#include <limits>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/accounting.hpp"
#include "plis/autodiff.hpp"
#include "plis/data.hpp"
#include "plis/io.hpp"
#include "plis/models.hpp"
#include "plis/rng.hpp"

namespace plis {

struct DpSgdConfig {
  double clip = 1.0;   // C, the per-sample L2 bound (= Δ of each step)
  double sigma = 1.0;  // noise multiplier; noise sd on the clipped sum is sigma * clip
  double learning_rate = 0.1;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool is_private = true;
  // When set, sigma is replaced by sigma_for_budget over the run's step count.
  std::optional<double> target_epsilon;
  double target_delta = 1e-5;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: lr must be > 0");
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
    if (is_private) {
      if (!(clip > 0.0)) throw std::invalid_argument("config: clip must be > 0 when private");
      if (!target_epsilon && !(sigma > 0.0)) throw std::invalid_argument("config: sigma must be > 0 when private");
      if (!(target_delta > 0.0 && target_delta < 1.0)) throw std::invalid_argument("config: target_delta must be in (0, 1)");
    }
  }

  std::size_t steps_per_epoch(std::size_t n) const { return (n + batch_size - 1) / batch_size; }
};

/// Parses flat `key=value` lines; `#` starts a comment.
inline DpSgdConfig parse_train_config(std::string_view text) {
  DpSgdConfig c;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto count = [&]() -> std::uint64_t {
      const double v = parse_double(value);
      if (v < 0 || v != std::floor(v)) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + key +
                                    " must be a non-negative integer");
      }
      return static_cast<std::uint64_t>(v);
    };
    try {
      if (key == "clip") c.clip = parse_double(value);
      else if (key == "sigma") c.sigma = parse_double(value);
      else if (key == "lr") c.learning_rate = parse_double(value);
      else if (key == "epochs") c.epochs = count();
      else if (key == "batch_size") c.batch_size = count();
      else if (key == "seed") c.seed = count();
      else if (key == "target_epsilon") c.target_epsilon = parse_double(value);
      else if (key == "target_delta") c.target_delta = parse_double(value);
      else if (key == "private") {
        if (value == "true" || value == "1") c.is_private = true;
        else if (value == "false" || value == "0") c.is_private = false;
        else throw std::invalid_argument("private must be true/false");
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      if (msg.rfind("config line", 0) == 0) throw;
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + msg);
    }
  }
  c.validate();
  return c;
}

/// g · C / max(C, ‖g‖₂), built from graph ops so it can be differentiated
/// again. A zero gradient is returned unchanged.
inline Tensor clip_differentiable(const Tensor& g, double clip) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip_differentiable: clip must be > 0");
  if (l2_norm(g.data()) == 0.0) return g;
  const Tensor norm = sqrt(squared_norm(g));
  const Tensor factor = div(Tensor::scalar(clip), max_scalar(norm, clip));
  return mul(g, factor);
}

struct StepResult {
  ParamSet params;
  std::vector<double> noise;  // the draw added to the clipped sum (empty when non-private)
  double loss = 0.0;          // batch mean of per-sample losses before the update
  double max_clipped_norm = 0.0;
};

namespace detail {

inline ParamSet apply_update(const ParamSet& params, const std::vector<double>& summed,
                             std::size_t batch, double lr) {
  std::vector<double> v = params.flat.values();
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * (summed[j] * inv);
  return {Tensor::vector(std::move(v)), params.layout};
}

inline void check_batch(std::span<const SubjectRecord> batch) {
  if (batch.empty()) throw std::invalid_argument("sgd step: empty batch");
}

}  // namespace detail

/// θ ← θ − lr · (1/|B|) Σ_i ∇_θ ℓ_i, per-sample gradients summed in batch order.
inline StepResult sgd_step(const ModelSpec& spec, const ParamSet& params,
                           std::span<const SubjectRecord> batch, double lr) {
  detail::check_batch(batch);
  std::vector<double> summed(params.size(), 0.0);
  StepResult r;
  for (const auto& s : batch) {
    SampleTape tape(spec, params, s.x, s.y);
    r.loss += tape.loss().item();
    const Tensor g = tape.param_grad(false);
    for (std::size_t j = 0; j < summed.size(); ++j) summed[j] += g[j];
    r.max_clipped_norm = std::max(r.max_clipped_norm, l2_norm(g.data()));
  }
  r.loss /= static_cast<double>(batch.size());
  r.params = detail::apply_update(params, summed, batch.size(), lr);
  return r;
}

/// θ ← θ − lr · (1/|B|)(Σ_i clip(g_i, C) + N(0, (σC)² I)); the noise stream
/// is keyed by (config.seed, step) so any step can be replayed alone.
/// sigma == 0 is accepted here (noise-free); train() requires sigma > 0.
inline StepResult dp_sgd_step(const ModelSpec& spec, const ParamSet& params,
                              std::span<const SubjectRecord> batch, const DpSgdConfig& config,
                              std::size_t step) {
  detail::check_batch(batch);
  if (!(config.clip > 0.0) || !(config.sigma >= 0.0)) {
    throw std::invalid_argument("dp_sgd_step: need clip > 0 and sigma >= 0");
  }
  std::vector<double> summed(params.size(), 0.0);
  StepResult r;
  for (const auto& s : batch) {
    SampleTape tape(spec, params, s.x, s.y);
    r.loss += tape.loss().item();
    const Tensor clipped = clip_differentiable(tape.param_grad(false), config.clip);
    for (std::size_t j = 0; j < summed.size(); ++j) summed[j] += clipped[j];
    r.max_clipped_norm = std::max(r.max_clipped_norm, l2_norm(clipped.data()));
  }
  r.loss /= static_cast<double>(batch.size());
  CounterRng rng(config.seed, 0xD9000000ULL + step);
  r.noise = rng.normals(params.size(), config.sigma * config.clip);
  const Tensor noisy = gaussian_noise_add(Tensor::vector(summed), Tensor::vector(r.noise));
  r.params = detail::apply_update(params, noisy.values(), batch.size(), config.learning_rate);
  return r;
}

struct StepTrace {
  std::size_t step = 0;
  double loss = 0.0;
  double epsilon_so_far = 0.0;  // +inf for non-private runs
  double max_clipped_norm = 0.0;
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // dataset mean loss after each epoch
  std::vector<StepTrace> steps;
  ParamSet params;
  AccountantState accountant;
  double sigma = 0.0;  // noise multiplier actually used
  std::optional<EpsilonResult> final_epsilon;

  std::string steps_csv() const {
    CsvWriter csv({"step", "loss", "epsilon_so_far"});
    for (const auto& s : steps) csv.row({static_cast<double>(s.step), s.loss, s.epsilon_so_far});
    return csv.str();
  }
};

/// Mean per-sample loss over `data`, evaluated in batches of 64.
inline double dataset_loss(const ModelSpec& spec, const ParamSet& params,
                           std::span<const SubjectRecord> data) {
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += 64) {
    const std::size_t end = std::min(data.size(), start + 64);
    std::vector<Tensor> xs, ys;
    for (std::size_t i = start; i < end; ++i) {
      xs.push_back(data[i].x);
      ys.push_back(data[i].y);
    }
    Tensor targets = stack(ys);
    const double batch = batch_loss(spec, params.layout, params.flat, stack(xs), targets).item();
    total += batch * static_cast<double>(end - start);
  }
  return total / static_cast<double>(data.size());
}

/// Runs `config.epochs` passes over seeded per-epoch shuffles in disclosed
/// batches. Private runs record one Gaussian mechanism (Δ = C, σ_noise = σC)
/// per step.
inline TrainTrace train(const ModelSpec& spec, std::span<const SubjectRecord> data,
                        const DpSgdConfig& config, std::optional<ParamSet> initial = std::nullopt) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  TrainTrace trace;
  trace.params = initial ? *initial : init_params(spec, config.seed);
  const std::size_t per_epoch = config.steps_per_epoch(data.size());
  const std::size_t total_steps = per_epoch * config.epochs;

  DpSgdConfig run = config;
  if (config.is_private && config.target_epsilon && total_steps > 0) {
    run.sigma = sigma_for_budget(*config.target_epsilon, config.target_delta, total_steps, config.clip);
  }
  trace.sigma = config.is_private ? run.sigma : 0.0;

  double snr_total = 0.0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = CounterRng(config.seed, 0xE9000000ULL + epoch).permutation(data.size());
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<SubjectRecord> batch;
      for (std::size_t k = b * config.batch_size; k < std::min(data.size(), (b + 1) * config.batch_size); ++k) {
        batch.push_back(data[order[k]]);
      }
      StepResult r = config.is_private ? dp_sgd_step(spec, trace.params, batch, run, step)
                                       : sgd_step(spec, trace.params, batch, run.learning_rate);
      if (!std::isfinite(r.loss)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      }
      for (double v : r.params.flat.data()) {
        if (!std::isfinite(v)) throw std::runtime_error("train: parameters diverged at step " + std::to_string(step));
      }
      trace.params = std::move(r.params);
      StepTrace st{step, r.loss, std::numeric_limits<double>::infinity(), r.max_clipped_norm};
      if (config.is_private) {
        const GaussianMechanismParams gm{config.clip, run.sigma * config.clip};
        trace.accountant.add_step(gm);
        snr_total += gm.snr_squared();
        st.epsilon_so_far =
            detail::epsilon_from_total(snr_total, trace.accountant.alpha_grid(), config.target_delta).epsilon;
      }
      trace.steps.push_back(st);
      ++step;
    }
    const double loss = dataset_loss(spec, trace.params, data);
    if (!std::isfinite(loss)) throw std::runtime_error("train: non-finite loss after step " + std::to_string(step - 1));
    trace.epoch_loss.push_back(loss);
  }
  if (config.is_private && !trace.accountant.empty()) {
    trace.final_epsilon = epsilon_from_rdp(trace.accountant, config.target_delta);
  }
  return trace;
}

}  // namespace plis
