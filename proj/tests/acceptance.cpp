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


// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is 0 only if every selected
// criterion passes.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "op_cases.hpp"
#include "plis/accounting.hpp"
#include "plis/attack.hpp"
#include "plis/checkpoint.hpp"
#include "plis/cli.hpp"
#include "plis/data.hpp"
#include "plis/dpsgd.hpp"
#include "plis/gradcheck.hpp"
#include "plis/image_metrics.hpp"
#include "plis/models.hpp"
#include "plis/plis.hpp"
#include "test_util.hpp"

namespace plis {
namespace {

namespace fs = std::filesystem;
using testing::max_rel_diff;
using testing::random_tensor;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("plis_acceptance_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  fs::path path_;
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "plis");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << "plis " << args.at(1) << " failed: " << err.str();
  return code;
}

// ---------------------------------------------------------------------------
// 1. Autodiff against central differences.

constexpr double kFirstOrderTol = 1e-5;
constexpr double kSecondOrderTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kRelativeFloor = 1e-6;

// ‖∇_θ ℓ‖² as a function of whichever of (θ, x) is `t`, differentiable when t is attached.
Tensor grad_norm_sq_in_x(const ModelSpec& spec, const ParamSet& params, const Tensor& t, const Tensor& y) {
  Graph local;
  const bool outer = t.attached();
  Graph& g = outer ? *t.graph() : local;
  const Tensor x = outer ? t : g.leaf(t);
  const Tensor theta = g.leaf(params.flat);
  const Tensor loss = per_sample_loss(spec, params.layout, theta, x, y);
  const Tensor value = squared_norm(g.backward(loss, {theta}, true)[0]);
  return outer ? value : value.detach();
}

ModelSpec random_small_model(std::size_t index, CounterRng& rng) {
  const std::size_t in = 2 + rng.below(4);
  const std::size_t hidden = 2 + rng.below(5);
  const std::size_t out = 1 + rng.below(3);
  switch (index % 5) {
    case 0:
      return ModelSpec{{in}, {Linear{in, hidden}, Tanh{}, Linear{hidden, out}}, LossKind::mse};
    case 1:
      return ModelSpec{{in}, {Linear{in, hidden}, Softplus{}, Linear{hidden, out + 1}}, LossKind::cross_entropy};
    case 2:
      return ModelSpec{{in}, {Linear{in, hidden}, Relu{}, Linear{hidden, hidden}, Tanh{}, Linear{hidden, out}},
                       LossKind::mse};
    case 3:
      return small_cnn_spec(1, 6, 6, 2, 2, 2, 3);
    default:
      return ModelSpec{{2, 5, 5}, {Conv2d{2, 2, 2}, Tanh{}, Flatten{}, Linear{32, out + 1}}, LossKind::cross_entropy};
  }
}

Tensor random_target(const ModelSpec& spec, CounterRng& rng) {
  const std::size_t k = spec.output_dim();
  if (spec.loss == LossKind::mse) return random_tensor(rng, {k});
  return Tensor::vector({static_cast<double>(rng.below(k))});
}

Verdict criterion_autodiff() {
  const auto t0 = Clock::now();
  double op_first = 0.0, op_second = 0.0;
  const auto cases = testing::op_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    CounterRng rng(3000, i);
    const Tensor x = c.sample(rng);
    const ScalarFn f = [&](const Tensor& t) { return testing::weighted_sum(c.op(t), 31); };
    op_first = std::max(op_first, finite_diff_check(f, x, kFdStep));
    const ScalarFn h = [&](const Tensor& t) {
      Graph local;
      const bool outer = t.attached();
      Graph& g = outer ? *t.graph() : local;
      const Tensor leaf = outer ? t : g.leaf(t);
      const Tensor grad = g.backward(testing::weighted_sum(tanh(c.op(leaf)), 37), {leaf}, true)[0];
      const Tensor value = squared_norm(grad);
      return outer ? value : value.detach();
    };
    op_second = std::max(op_second, finite_diff_check(h, x, kFdStep, kRelativeFloor));
  }

  double model_first = 0.0, model_second = 0.0;
  CounterRng rng(4000);
  constexpr std::size_t kModels = 20;
  for (std::size_t m = 0; m < kModels; ++m) {
    const ModelSpec spec = random_small_model(m, rng);
    const ParamSet params = init_params(spec, 500 + m);
    const Tensor x = random_tensor(rng, spec.input_shape);
    const Tensor y = random_target(spec, rng);
    const ScalarFn in_theta = [&](const Tensor& theta) {
      return per_sample_loss(spec, params.layout, theta, x, y);
    };
    const ScalarFn in_x = [&](const Tensor& t) {
      return per_sample_loss(spec, params.layout, params.flat, t, y);
    };
    const ScalarFn second = [&](const Tensor& t) { return grad_norm_sq_in_x(spec, params, t, y); };
    model_first = std::max({model_first, finite_diff_check(in_theta, params.flat, kFdStep, kRelativeFloor),
                            finite_diff_check(in_x, x, kFdStep, kRelativeFloor)});
    model_second = std::max(model_second, finite_diff_check(second, x, kFdStep, kRelativeFloor));
  }
  const double secs = seconds_since(t0);
  const bool pass = op_first < kFirstOrderTol && model_first < kFirstOrderTol &&
                    op_second < kSecondOrderTol && model_second < kSecondOrderTol && secs < 60.0;
  return {pass, std::to_string(cases.size()) + " ops + " + std::to_string(kModels) +
                    " models; first-order max rel err ops " + fmt(op_first) + " models " + fmt(model_first) +
                    " (< 1e-5); grad-norm² ops " + fmt(op_second) + " models " + fmt(model_second) +
                    " (< 1e-4); " + fmt(secs, 3) + " s (< 60 s)"};
}

// ---------------------------------------------------------------------------
// 2. Direct and expanded PLIS routes agree.

Verdict criterion_routes() {
  const auto t0 = Clock::now();
  CounterRng rng(5000);
  double worst = 0.0, min_norm = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const ModelSpec spec = i < 10 ? mlp_spec(4 + i % 3, 5, 3, i % 2 ? LossKind::mse : LossKind::cross_entropy)
                                  : small_cnn_spec(1 + i % 2, 7, 7, 3, 3, 4, 3);
    const ParamSet params = init_params(spec, 600 + i);
    const SubjectRecord s{subject_id(i), random_tensor(rng, spec.input_shape, 0.0, 1.0), random_target(spec, rng),
                          false};
    const PlOptions opt{rng.uniform(0.5, 2.0), {}};
    const auto a = plis_direct(spec, params, s, opt);
    const auto b = plis_expanded(spec, params, s, opt);
    worst = std::max(worst, max_rel_diff(a.plis, b.plis));
    min_norm = std::min(min_norm, a.subject_plis_norm);
    ++count;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && min_norm > 0.0 && secs < 60.0,
          std::to_string(count) + " subjects (10 MLP, 10 CNN); max entrywise rel diff " + fmt(worst) +
              " (< 1e-8); smallest subject PLIS norm " + fmt(min_norm) + "; " + fmt(secs, 3) + " s (< 60 s)"};
}

// ---------------------------------------------------------------------------
// 3. Linear regression closed forms. For ℓ = (wᵀx − y)² with r = wᵀx − y:
// PLIS = (8 r w ‖x‖² + 8 r² x)/σ² and FIM = JᵀJ/σ² with J = 2rI + 2 x wᵀ.

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Verdict criterion_closed_form() {
  CounterRng rng(6000);
  double worst_plis = 0.0, worst_fim = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(7);
    const auto w = rng.normals(d), x = rng.normals(d);
    const double y = rng.normal();
    const double sigma = rng.uniform(0.3, 3.0);
    double r = -y, xx = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      r += w[i] * x[i];
      xx += x[i] * x[i];
    }
    const ModelSpec spec = linear_regression_spec(d);
    const ParamSet params = make_params(spec, w);
    const SubjectRecord s{"s", Tensor::vector(x), Tensor::vector({y}), false};
    const auto p = plis_direct(spec, params, s, {sigma, {}});
    for (std::size_t i = 0; i < d; ++i) {
      worst_plis = std::max(worst_plis, rel(p.plis[i], (8 * r * w[i] * xx + 8 * r * r * x[i]) / (sigma * sigma)));
    }
    std::vector<double> j(d * d);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) j[a * d + b] = (a == b ? 2 * r : 0.0) + 2 * x[a] * w[b];
    const auto f = fim_subject(spec, params, s, sigma);
    double scale = 0.0;
    for (double v : f.fim.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        double e = 0.0;
        for (std::size_t k = 0; k < d; ++k) e += j[k * d + a] * j[k * d + b];
        e /= sigma * sigma;
        // Entries that cancel to ~0 are judged against the matrix scale.
        worst_fim = std::max(worst_fim, std::abs(f.fim[a * d + b] - e) / std::max(std::abs(e), 1e-12 * scale));
      }
  }
  return {worst_plis < 1e-10 && worst_fim < 1e-10,
          "20 random linear subjects; PLIS max rel err " + fmt(worst_plis) + ", FIM max rel err " + fmt(worst_fim) +
              " (< 1e-10)"};
}

// ---------------------------------------------------------------------------
// 4. Per-attribute FIL and |PLIS| single out the informative feature after DP training.

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t k = i;
    while (k + 1 < idx.size() && v[idx[k + 1]] == v[idx[i]]) ++k;
    for (std::size_t m = i; m <= k; ++m) r[idx[m]] = 0.5 * static_cast<double>(i + k);
    i = k + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Verdict criterion_informative_feature() {
  const auto t0 = Clock::now();
  constexpr std::size_t n = 500, d = 16, informative = 9;
  const auto ds = make_regression(n, d, {informative}, 0.1, 0);
  const auto subjects = ds.subjects();
  const ModelSpec spec = linear_regression_spec(d);
  DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.epochs = 20;
  cfg.batch_size = n;
  cfg.learning_rate = 0.5;
  cfg.seed = 0;
  cfg.target_epsilon = 0.2;
  cfg.target_delta = 1e-3;
  const auto run = train(spec, subjects, cfg);
  const double noise_sd = run.sigma * cfg.clip;
  std::vector<double> fil(d, 0.0), plis_abs(d, 0.0);
  for (const auto& s : subjects) {
    const auto f = fim_subject(spec, run.params, s, noise_sd);
    const auto p = plis_direct(spec, run.params, s, {noise_sd, {}});
    for (std::size_t j = 0; j < d; ++j) {
      fil[j] += f.fil_per_attribute[j] / n;
      plis_abs[j] += std::abs(p.plis[j]) / n;
    }
  }
  double max_fil = 0.0, max_plis = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (j == informative) continue;
    max_fil = std::max(max_fil, fil[j]);
    max_plis = std::max(max_plis, plis_abs[j]);
  }
  const double fil_ratio = fil[informative] / max_fil;
  const double plis_ratio = plis_abs[informative] / max_plis;
  const double rho = spearman(fil, plis_abs);
  const double secs = seconds_since(t0);
  return {fil_ratio >= 5.0 && plis_ratio >= 5.0 && rho >= 0.8 && secs < 300.0,
          "eps=" + fmt(run.final_epsilon->epsilon) + " sigma=" + fmt(run.sigma) + "; feature 9 / best other: FIL " +
              fmt(fil_ratio, 3) + "x, |PLIS| " + fmt(plis_ratio, 3) + "x (>= 5x); Spearman " + fmt(rho, 3) +
              " (>= 0.8); " + fmt(secs, 3) + " s (< 300 s)"};
}

// ---------------------------------------------------------------------------
// 5. Accountant.

Verdict criterion_accountant() {
  const auto t0 = Clock::now();
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };

  expect(near(rdp_of_gaussian({1.0, 1.0}, 2.0), 1.0), "rho(1,1,2)");
  expect(near(rdp_of_gaussian({2.0, 4.0}, 8.0), 1.0), "rho(2,4,8)");
  expect(near(gdp_of_gaussian({1.0, 2.0}), 0.5), "mu(1,2)");
  expect(near(gdp_of_gaussian({3.0, 1.5}), 2.0), "mu(3,1.5)");
  AccountantState four;
  for (int i = 0; i < 4; ++i) four.add_step({1.0, 2.0});
  expect(near(compose(four).mu_total, 1.0), "4 steps of mu 0.5");
  for (int k : {1, 2, 7, 50, 1000}) {
    AccountantState s;
    for (int i = 0; i < k; ++i) s.add_step({0.8, 1.7});
    expect(near(compose(s).mu_total, std::sqrt(static_cast<double>(k)) * 0.8 / 1.7),
           "sqrt(k) composition k=" + std::to_string(k));
  }

  auto eps_at = [](double sigma, double delta) {
    AccountantState s;
    for (int i = 0; i < 100; ++i) s.add_step({1.0, sigma});
    return epsilon_from_rdp(s, delta).epsilon;
  };
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.5, 0.8, 1.0, 2.0, 4.0, 10.0, 50.0}) {
    const double e = eps_at(sigma, 1e-5);
    expect(e < prev, "eps decreasing in sigma at " + fmt(sigma));
    prev = e;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double delta : {1e-10, 1e-8, 1e-5, 1e-3, 1e-1}) {
    const double e = eps_at(2.0, delta);
    expect(e < prev, "eps decreasing in delta at " + fmt(delta));
    prev = e;
  }
  for (double eps : {0.2, 1.0, 8.0})
    for (std::size_t steps : {std::size_t{1}, std::size_t{100}, std::size_t{5000}}) {
      const double sigma = sigma_for_budget(eps, 1e-5, steps, 1.0);
      AccountantState at, below;
      for (std::size_t i = 0; i < steps; ++i) {
        at.add_step({1.0, sigma});
        below.add_step({1.0, 0.99 * sigma});
      }
      expect(epsilon_from_rdp(at, 1e-5).epsilon <= eps && epsilon_from_rdp(below, 1e-5).epsilon > eps,
             "round trip eps=" + fmt(eps) + " steps=" + std::to_string(steps));
    }
  const double secs = seconds_since(t0);
  std::string detail = "unit examples, monotonicity, 9 round trips, sqrt(k) composition; " + fmt(secs, 3) + " s (< 10 s)";
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty() && secs < 10.0, detail};
}

// ---------------------------------------------------------------------------
// 6. DP-SGD contract.

Verdict criterion_dpsgd_contract() {
  const auto ds = make_regression(200, 6, {0, 3}, 0.2, 11);
  const auto subjects = ds.subjects();
  const ModelSpec spec = ModelSpec{{6}, {Linear{6, 8}, Tanh{}, Linear{8, 1}}, LossKind::mse};

  DpSgdConfig clipped;
  clipped.clip = 0.3;
  clipped.sigma = 1.1;
  clipped.epochs = 5;
  clipped.batch_size = 16;
  clipped.seed = 21;
  clipped.learning_rate = 0.05;
  const auto run = train(spec, subjects, clipped);
  double max_norm = 0.0;
  for (const auto& s : run.steps) max_norm = std::max(max_norm, s.max_clipped_norm);
  const bool bounded = max_norm <= clipped.clip * (1.0 + 1e-12);

  const auto again = train(spec, subjects, clipped);
  const bool reproducible = again.params.flat.values() == run.params.flat.values() &&
                            again.steps_csv() == run.steps_csv();

  // Noise sd 1e-150 and a clip far above every gradient norm leave each update unchanged.
  DpSgdConfig vanishing = clipped;
  vanishing.sigma = 1e-150;
  vanishing.clip = 1e6;
  DpSgdConfig plain = clipped;
  plain.is_private = false;
  const auto a = train(spec, subjects, vanishing);
  const auto b = train(spec, subjects, plain);
  const bool identical = a.params.flat.values() == b.params.flat.values();

  return {bounded && reproducible && identical,
          std::to_string(run.steps.size()) + " steps; max post-clip norm " + fmt(max_norm, 6) + " <= C=" +
              fmt(clipped.clip) + ": " + (bounded ? "yes" : "no") + "; sigma->0 + no clip bit-identical to SGD: " +
              (identical ? "yes" : "no") + "; fixed-seed rerun bit-identical: " + (reproducible ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 7-9 share the CNN trained on glyph images with injected OOD samples.

constexpr std::size_t kImageSide = 28;
constexpr std::size_t kInDistribution = 512;
constexpr std::size_t kOod = 5;

struct OodRun {
  ImageDataset data;
  std::vector<SubjectRecord> subjects;
  ModelSpec spec;
  TrainTrace trace;
  std::vector<RankEntry> ranking;
};

OodRun ood_run(std::uint64_t seed) {
  OodRun r;
  r.data = inject_ood(make_glyph_images(kInDistribution, 2, kImageSide, kImageSide, seed), kOod, seed + 100);
  r.subjects = r.data.subjects();
  r.spec = small_cnn_spec(1, kImageSide, kImageSide, 2);
  DpSgdConfig cfg;
  cfg.is_private = false;
  cfg.learning_rate = 0.01;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.seed = seed;
  r.trace = train(r.spec, r.subjects, cfg);
  r.ranking = rank_subjects(r.subjects, r.spec, r.trace.params, {});
  return r;
}

std::map<std::uint64_t, OodRun>& ood_cache() {
  static std::map<std::uint64_t, OodRun> cache;
  return cache;
}

const OodRun& cached_ood_run(std::uint64_t seed) {
  auto& cache = ood_cache();
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, ood_run(seed)).first;
  return it->second;
}

std::size_t index_of(const std::vector<SubjectRecord>& subjects, const std::string& id) {
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i].id == id) return i;
  throw std::runtime_error("unknown subject " + id);
}

Verdict criterion_ood_ranking() {
  const auto t0 = Clock::now();
  std::size_t good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const OodRun& r = cached_ood_run(seed);
    const std::size_t n = r.ranking.size();
    std::size_t worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.subjects[index_of(r.subjects, r.ranking[i].subject_id)].ood) worst = std::max(worst, i);
    }
    const bool top_decile = 10 * worst < n;
    good += top_decile;
    per_seed += " " + std::to_string(seed) + ":" + std::to_string(worst) + (top_decile ? "" : "(miss)");
  }
  const double secs = seconds_since(t0);
  return {good >= 4 && secs < 600.0,
          std::to_string(good) + "/5 seeds put all 5 OOD samples in the top decile of " +
              std::to_string(kInDistribution + kOod) + " (>= 4); worst OOD rank index per seed:" + per_seed + "; " +
              fmt(secs, 3) + " s (< 600 s)"};
}

// ---------------------------------------------------------------------------
// 8. Reconstruction quality tracks PLIS; DP release defeats the attack.

double attack_ssim(const OodRun& r, const ParamSet& params, std::size_t index, const std::optional<DpRelease>& dp,
                   std::uint64_t seed) {
  const auto& s = r.subjects[index];
  const Tensor observed = observe_gradient(r.spec, params, s, dp);
  AttackConfig cfg;
  cfg.iterations = 200;
  cfg.learning_rate = 0.05;
  cfg.seed = seed;
  const auto result = reconstruct(r.spec, params, observed, s.y, cfg);
  return ssim(GrayImage(kImageSide, kImageSide, result.reconstruction.values()), r.data.images[index]);
}

Verdict criterion_attack_ordering() {
  const auto t0 = Clock::now();
  const OodRun& r = cached_ood_run(0);
  const std::size_t high = index_of(r.subjects, r.ranking.front().subject_id);
  const std::size_t low = index_of(r.subjects, r.ranking.back().subject_id);

  std::size_t ordered = 0;
  std::string np_detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double sh = attack_ssim(r, r.trace.params, high, std::nullopt, seed);
    const double sl = attack_ssim(r, r.trace.params, low, std::nullopt, seed);
    ordered += sh > sl;
    np_detail += " " + fmt(sh) + "/" + fmt(sl);
  }

  DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.target_epsilon = 1.0;
  cfg.target_delta = 1e-5;
  cfg.learning_rate = 0.01;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.seed = 0;
  const auto dp_run = train(r.spec, r.subjects, cfg);
  const DpRelease release{cfg.clip, dp_run.sigma, 7};
  double dp_max = -1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    dp_max = std::max({dp_max, attack_ssim(r, dp_run.params, high, release, seed),
                       attack_ssim(r, dp_run.params, low, release, seed)});
  }
  const double secs = seconds_since(t0);
  return {ordered >= 4 && dp_max < 0.5 && secs < 900.0,
          "high " + r.subjects[high].id + " vs low " + r.subjects[low].id + ": SSIM(high) > SSIM(low) in " +
              std::to_string(ordered) + "/5 seeds (>= 4), high/low per seed:" + np_detail +
              "; DP (eps=1, delta=1e-5, sigma=" + fmt(dp_run.sigma) + ") max SSIM " + fmt(dp_max) + " (< 0.5); " +
              fmt(secs, 3) + " s (< 900 s)"};
}

// ---------------------------------------------------------------------------
// 9. PLIS is cheap per subject; the input Jacobian is guarded.

Verdict criterion_guarded_cost() {
  const OodRun& r = cached_ood_run(0);
  TempDir dir("cost");
  setenv("PLIS_LOG", "quiet", 1);
  save_checkpoint(dir / "m.plck", r.spec, r.trace.params);
  save_images(dir / "d.plds", r.data);
  constexpr std::size_t kSubjects = 20;
  const auto t0 = Clock::now();
  const int code = run_cli({"analyze-plis", "--model", dir / "m.plck", "--data", dir / "d.plds", "--out", dir / "r",
                            "--limit", std::to_string(kSubjects)});
  const double per_subject = seconds_since(t0) / kSubjects;

  const auto t1 = Clock::now();
  fim_subject(r.spec, r.trace.params, r.subjects[0], 1.0);
  const double fim_secs = seconds_since(t1);

  const ModelSpec big = small_cnn_spec(1, 65, 65, 2);
  const SubjectRecord big_subject{"big", Tensor::zeros({1, 65, 65}), Tensor::scalar(0), false};
  bool refused = false;
  std::string message;
  try {
    fim_subject(big, init_params(big, 1), big_subject, 1.0);
  } catch (const std::invalid_argument& e) {
    message = e.what();
    refused = message.find("4225") != std::string::npos;
  }
  const bool pass = code == 0 && r.trace.params.size() >= 10000 && per_subject < 1.0 && refused;
  return {pass, "CNN with " + std::to_string(r.trace.params.size()) + " params (>= 1e4): analyze-plis " +
                    fmt(per_subject, 3) + " s/subject over " + std::to_string(kSubjects) +
                    " subjects (< 1 s); fim_subject on the 784-d input " + fmt(fim_secs, 3) +
                    " s; 65x65 input (4225 > " + std::to_string(kMaxJacobianInputDim) + ") refused: " +
                    (refused ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism through the command line.

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

bool run_pipeline(const TempDir& dir) {
  write_file_atomic(dir / "c.cfg", "clip=1\nsigma=1.2\nlr=0.05\nepochs=2\nbatch_size=16\nseed=4\nprivate=true\n");
  return run_cli({"gen-data", "--kind", "images", "--n", "48", "--height", "12", "--width", "12", "--ood", "2",
                  "--seed", "3", "--out", dir / "d.plds"}) == 0 &&
         run_cli({"train", "--config", dir / "c.cfg", "--data", dir / "d.plds", "--out", dir / "m.plck", "--trace",
                  dir / "trace.csv", "--accountant", dir / "accountant.csv"}) == 0 &&
         run_cli({"analyze-plis", "--model", dir / "m.plck", "--data", dir / "d.plds", "--out", dir / "plis",
                  "--sigma", "1.2", "--jobs", "2"}) == 0 &&
         run_cli({"rank", "--model", dir / "m.plck", "--data", dir / "d.plds", "--out", dir / "rank.csv"}) == 0 &&
         run_cli({"attack", "--model", dir / "m.plck", "--data", dir / "d.plds", "--subject", "s00048", "--out",
                  dir / "attack", "--iterations", "40", "--restarts", "2", "--jobs", "2", "--dp-clip", "1",
                  "--dp-sigma", "0.5", "--dp-seed", "9"}) == 0;
}

Verdict criterion_determinism() {
  setenv("PLIS_LOG", "quiet", 1);
  TempDir first("e2e_a"), second("e2e_b");
  if (!run_pipeline(first) || !run_pipeline(second)) return {false, "pipeline command failed"};
  const auto a = tree_contents(first.path());
  const auto b = tree_contents(second.path());
  std::size_t csvs = 0;
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    if (name.ends_with(".csv")) ++csvs;
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differing.push_back(name);
  }
  if (a.size() != b.size()) differing.push_back("(file sets differ)");
  std::string detail = std::to_string(a.size()) + " files (" + std::to_string(csvs) +
                       " CSVs) from gen-data, train, analyze-plis, rank, attack compared across two runs; ";
  detail += differing.empty() ? "all byte-identical" : "differing: " + differing.front();
  return {differing.empty() && csvs > 0, detail};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Verdict()> check;
};

}  // namespace
}  // namespace plis

int main(int argc, char** argv) {
  using namespace plis;
  const std::vector<Criterion> all = {
      {1, "autodiff matches finite differences", criterion_autodiff},
      {2, "direct and expanded PLIS agree", criterion_routes},
      {3, "linear-regression closed forms", criterion_closed_form},
      {4, "informative feature dominates FIL and |PLIS| under DP", criterion_informative_feature},
      {5, "privacy accountant", criterion_accountant},
      {6, "DP-SGD contract", criterion_dpsgd_contract},
      {7, "injected OOD samples rank in the top decile", criterion_ood_ranking},
      {8, "attack SSIM ordering and DP protection", criterion_attack_ordering},
      {9, "PLIS cost and Jacobian guard", criterion_guarded_cost},
      {10, "end-to-end determinism", criterion_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.number << " (" << c.name << "): " << v.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
