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
#include <optional>
#include <span>
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

/// How the privacy loss is formed: PL = ‖clip(g)‖² / σ² with either part
/// optional. Without sigma the result is the non-private gradient signal.
struct PlOptions {
  std::optional<double> sigma;
  std::optional<double> clip;

  void validate() const {
    if (sigma && !(*sigma > 0.0)) throw std::invalid_argument("privacy loss: sigma must be > 0");
    if (clip && !(*clip > 0.0)) throw std::invalid_argument("privacy loss: clip must be > 0");
  }
  double inv_sigma_sq() const { return sigma ? 1.0 / (*sigma * *sigma) : 1.0; }
  std::string mode() const { return sigma ? "private" : "non-private"; }
};

struct PlisReport {
  std::string subject_id;
  double pl = 0.0;
  Tensor plis;  // shaped like the subject's input
  double subject_plis_norm = 0.0;
  PlOptions options;
};

namespace detail {

// ∇_θ ℓ recorded on the tape, clipped when configured.
inline Tensor recorded_gradient(SampleTape& tape, const PlOptions& opt) {
  const Tensor g = tape.param_grad(true);
  return opt.clip ? clip_differentiable(g, *opt.clip) : g;
}

inline PlisReport make_report(const SubjectRecord& s, double pl, Tensor plis, const PlOptions& opt) {
  PlisReport r{s.id, pl, std::move(plis), 0.0, opt};
  r.subject_plis_norm = l2_norm(r.plis.data());
  return r;
}

}  // namespace detail

inline double privacy_loss(const ModelSpec& spec, const ParamSet& params, const SubjectRecord& s,
                           const PlOptions& opt = {}) {
  opt.validate();
  SampleTape tape(spec, params, s.x, s.y);
  Tensor g = tape.param_grad(false);
  if (opt.clip) g = clip_differentiable(g, *opt.clip);
  const double n = l2_norm(g.data());
  return n * n * opt.inv_sigma_sq();
}

/// ∇_x PL by differentiating the recorded gradient norm a second time.
inline PlisReport plis_direct(const ModelSpec& spec, const ParamSet& params, const SubjectRecord& s,
                              const PlOptions& opt = {}) {
  opt.validate();
  SampleTape tape(spec, params, s.x, s.y);
  const Tensor g = detail::recorded_gradient(tape, opt);
  const Tensor pl = scale(squared_norm(g), opt.inv_sigma_sq());
  Tensor plis = tape.graph().backward(pl, {tape.x()})[0];
  return detail::make_report(s, pl.item(), std::move(plis), opt);
}

/// ∇_x PL as the vector-Jacobian product (2/σ²) gᵀ J_x g with the left g
/// held constant.
inline PlisReport plis_expanded(const ModelSpec& spec, const ParamSet& params,
                                const SubjectRecord& s, const PlOptions& opt = {}) {
  opt.validate();
  SampleTape tape(spec, params, s.x, s.y);
  const Tensor g = detail::recorded_gradient(tape, opt);
  const Tensor cotangent = scale(g.detach(), 2.0 * opt.inv_sigma_sq());
  Tensor plis = tape.graph().backward(g, {tape.x()}, false, cotangent)[0];
  const double n = l2_norm(g.data());
  return detail::make_report(s, n * n * opt.inv_sigma_sq(), std::move(plis), opt);
}

// --- Jacobian-based reports -------------------------------------------------

inline constexpr std::size_t kMaxJacobianInputDim = 4096;

/// Largest eigenvalue of a symmetric PSD n×n matrix by power iteration with a
/// Rayleigh-quotient stopping rule.
inline double power_iteration_max_eigenvalue(std::span<const double> m, std::size_t n,
                                             double tol = 1e-10, std::size_t max_iter = 10000) {
  if (m.size() != n * n) throw std::invalid_argument("power iteration: matrix is not n x n");
  std::vector<double> v = CounterRng(0x9E3779B9ULL, n).normals(n);
  auto normalize = [](std::vector<double>& u) {
    const double norm = l2_norm(u);
    if (norm == 0.0) return false;
    for (double& e : u) e /= norm;
    return true;
  };
  normalize(v);
  double lambda = 0.0;
  std::vector<double> w(n);
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) w[i] = dot(m.subspan(i * n, n), v);
    const double next = dot(v, w);
    if (!normalize(w)) return 0.0;
    v.swap(w);
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

/// AᵀA for a row-major rows×cols matrix.
inline std::vector<double> gram(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> out(cols * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      if (row[i] == 0.0) continue;
      for (std::size_t j = i; j < cols; ++j) out[i * cols + j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < i; ++j) out[i * cols + j] = out[j * cols + i];
  return out;
}

/// J = ∂(∇_θ ℓ)/∂x as a p×d matrix. Column j is obtained by differentiating
/// the linear map u ↦ uᵀJ, itself recorded on the graph, in direction e_j.
inline Tensor param_grad_input_jacobian(const ModelSpec& spec, const ParamSet& params,
                                        const SubjectRecord& s, const char* caller) {
  const std::size_t d = shape_numel(spec.input_shape);
  if (d > kMaxJacobianInputDim) {
    throw std::invalid_argument(std::string(caller) + ": input dimension " + std::to_string(d) +
                                " exceeds the materialization guard of " +
                                std::to_string(kMaxJacobianInputDim) +
                                "; use plis (one backward pass) instead");
  }
  SampleTape tape(spec, params, s.x, s.y);
  Graph& graph = tape.graph();
  const Tensor g = tape.param_grad(true);
  const std::size_t p = g.numel();
  const Tensor u = graph.leaf(Tensor::zeros(g.shape()));
  const Tensor h = graph.backward(g, {tape.x()}, true, u)[0];
  std::vector<double> jac(p * d, 0.0);
  std::vector<double> basis(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    basis[j] = 1.0;
    const Tensor col = graph.backward(h, {u}, false, Tensor(h.shape(), basis))[0];
    basis[j] = 0.0;
    for (std::size_t k = 0; k < p; ++k) jac[k * d + j] = col[k];
  }
  return Tensor(Shape{p, d}, std::move(jac));
}

struct JacSensReport {
  std::string subject_id;
  Tensor jac;  // p×d
  double spectral_norm = 0.0;
  double frobenius_norm = 0.0;
};

struct FimReport {
  std::string subject_id;
  Tensor fim;  // d×d
  double fil_subject = 0.0;
  std::vector<double> fil_per_attribute;
};

inline JacSensReport jacsens_subject(const ModelSpec& spec, const ParamSet& params,
                                     const SubjectRecord& s) {
  JacSensReport r{s.id, param_grad_input_jacobian(spec, params, s, "jacsens_subject"), 0.0, 0.0};
  const std::size_t p = r.jac.shape()[0], d = r.jac.shape()[1];
  r.frobenius_norm = l2_norm(r.jac.data());
  r.spectral_norm = std::sqrt(std::max(0.0, power_iteration_max_eigenvalue(gram(r.jac.data(), p, d), d)));
  return r;
}

inline FimReport fim_from_jacobian(const std::string& id, const Tensor& jac, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("fim_subject: sigma must be > 0");
  const std::size_t p = jac.shape()[0], d = jac.shape()[1];
  std::vector<double> fim = gram(jac.data(), p, d);
  const double inv = 1.0 / (sigma * sigma);
  for (double& v : fim) v *= inv;
  FimReport r;
  r.subject_id = id;
  r.fil_subject = std::sqrt(std::max(0.0, power_iteration_max_eigenvalue(fim, d)));
  r.fil_per_attribute.resize(d);
  for (std::size_t i = 0; i < d; ++i) r.fil_per_attribute[i] = std::sqrt(std::max(0.0, fim[i * d + i]));
  r.fim = Tensor(Shape{d, d}, std::move(fim));
  return r;
}

/// FIM = JᵀJ / σ²; subject FIL is σ_max(J)/σ.
inline FimReport fim_subject(const ModelSpec& spec, const ParamSet& params, const SubjectRecord& s,
                             double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("fim_subject: sigma must be > 0");
  return fim_from_jacobian(s.id, param_grad_input_jacobian(spec, params, s, "fim_subject"), sigma);
}

// --- region norms and ranking -------------------------------------------------

/// Rectangle over the last two axes of the input, all channels included.
struct Region {
  std::size_t row = 0, col = 0, rows = 1, cols = 1;
};

inline double superpixel_norm(const PlisReport& report, const Region& r) {
  const Shape& s = report.plis.shape();
  const std::size_t h = s.size() >= 2 ? s[s.size() - 2] : 1;
  const std::size_t w = s.empty() ? 1 : s.back();
  const std::size_t channels = report.plis.numel() / (h * w);
  if (r.rows == 0 || r.cols == 0 || r.row + r.rows > h || r.col + r.cols > w) {
    throw std::invalid_argument("superpixel_norm: region rows [" + std::to_string(r.row) + ", " +
                                std::to_string(r.row + r.rows) + ") x cols [" + std::to_string(r.col) +
                                ", " + std::to_string(r.col + r.cols) + ") outside " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = r.row; i < r.row + r.rows; ++i)
      for (std::size_t j = r.col; j < r.col + r.cols; ++j) {
        const double v = report.plis[(c * h + i) * w + j];
        sum += v * v;
      }
  return std::sqrt(sum);
}

struct RankEntry {
  std::string subject_id;
  double pl = 0.0;
  double plis_norm = 0.0;
};

/// Descending subject_plis_norm order, ties broken by ascending id.
inline void sort_ranking(std::vector<RankEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.plis_norm != b.plis_norm) return a.plis_norm > b.plis_norm;
    return a.subject_id < b.subject_id;
  });
}

inline std::vector<PlisReport> plis_reports(const ModelSpec& spec, const ParamSet& params,
                                            std::span<const SubjectRecord> subjects,
                                            const PlOptions& opt, std::size_t jobs = 1) {
  return parallel_map(subjects.size(), jobs,
                      [&](std::size_t i) { return plis_direct(spec, params, subjects[i], opt); });
}

inline std::vector<RankEntry> rank_reports(std::span<const PlisReport> reports) {
  std::vector<RankEntry> out;
  out.reserve(reports.size());
  for (const auto& r : reports) out.push_back({r.subject_id, r.pl, r.subject_plis_norm});
  sort_ranking(out);
  return out;
}

inline std::vector<RankEntry> rank_subjects(std::span<const SubjectRecord> subjects,
                                            const ModelSpec& spec, const ParamSet& params,
                                            const PlOptions& opt = {}, std::size_t jobs = 1) {
  if (subjects.empty()) throw std::invalid_argument("rank_subjects: empty dataset");
  const auto reports = plis_reports(spec, params, subjects, opt, jobs);
  return rank_reports(reports);
}

/// Header subject_id,pl,plis_norm,mode,sigma; sigma is empty in non-private mode.
inline std::string plis_report_csv(std::span<const PlisReport> reports) {
  CsvWriter csv({"subject_id", "pl", "plis_norm", "mode", "sigma"});
  for (const auto& r : reports) {
    csv.row_strings({r.subject_id, format_double(r.pl), format_double(r.subject_plis_norm),
                     r.options.mode(), r.options.sigma ? format_double(*r.options.sigma) : ""});
  }
  return csv.str();
}

inline std::string ranking_csv(std::span<const RankEntry> ranking) {
  CsvWriter csv({"rank", "subject_id", "pl", "plis_norm"});
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    csv.row_strings({std::to_string(i + 1), ranking[i].subject_id, format_double(ranking[i].pl),
                     format_double(ranking[i].plis_norm)});
  }
  return csv.str();
}

}  // namespace plis
