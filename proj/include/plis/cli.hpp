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

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/attack.hpp"
#include "plis/checkpoint.hpp"
#include "plis/data.hpp"
#include "plis/dpsgd.hpp"
#include "plis/heatmap.hpp"
#include "plis/image_metrics.hpp"
#include "plis/io.hpp"
#include "plis/models.hpp"
#include "plis/plis.hpp"

namespace plis::cli {

enum class LogLevel { quiet, info, debug };

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("PLIS_LOG");
  if (!v) return LogLevel::info;
  const std::string s = v;
  if (s == "quiet") return LogLevel::quiet;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = LogLevel::info;

  void info(const std::string& msg) const {
    if (level != LogLevel::quiet) err << "[info] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level == LogLevel::debug) err << "[debug] " << msg << '\n';
  }
};

/// Subjects plus whichever concrete dataset they came from.
struct LoadedData {
  std::vector<SubjectRecord> subjects;
  std::optional<ImageDataset> images;
  std::optional<TabularDataset> table;
};

/// `.plds` files are image sets; `.csv` files are tabular regression data.
inline LoadedData load_data(const std::filesystem::path& path) {
  LoadedData d;
  const auto ext = path.extension().string();
  if (ext == ".plds") {
    d.images = load_images(path);
    d.subjects = d.images->subjects();
  } else if (ext == ".csv") {
    d.table = tabular_from_csv(read_file(path));
    d.subjects = d.table->subjects();
  } else {
    throw std::invalid_argument("data file " + path.string() + ": expected a .plds or .csv extension");
  }
  return d;
}

inline ModelSpec default_arch(const LoadedData& d) {
  if (d.images) return small_cnn_spec(1, d.images->height, d.images->width, d.images->classes);
  return linear_regression_spec(d.table->d);
}

inline std::vector<SubjectRecord> first_subjects(const LoadedData& d, std::size_t limit) {
  std::vector<SubjectRecord> s = d.subjects;
  if (limit > 0 && limit < s.size()) s.resize(limit);
  return s;
}

inline const SubjectRecord& find_subject(const LoadedData& d, const std::string& id) {
  for (const auto& s : d.subjects) {
    if (s.id == id) return s;
  }
  throw std::invalid_argument("subject '" + id + "' not found in data");
}

// --- subcommand bodies --------------------------------------------------------

struct GenDataArgs {
  std::string kind = "images";
  std::size_t n = 512;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t classes = 2, height = 28, width = 28, ood = 0;
  std::size_t d = 16;
  std::vector<std::size_t> informative{9};
  double noise = 0.1;
};

inline void gen_data(const Context& ctx, const GenDataArgs& a) {
  if (a.kind == "images") {
    auto ds = make_glyph_images(a.n, a.classes, a.height, a.width, a.seed);
    if (a.ood > 0) ds = inject_ood(std::move(ds), a.ood, a.seed);
    save_images(a.out, ds);
    ctx.info("wrote " + std::to_string(ds.size()) + " images to " + a.out);
  } else if (a.kind == "regression") {
    const auto ds = make_regression(a.n, a.d, a.informative, a.noise, a.seed);
    write_file_atomic(a.out, tabular_to_csv(ds));
    ctx.info("wrote " + std::to_string(ds.n) + " rows to " + a.out);
  } else {
    throw std::invalid_argument("--kind must be images or regression");
  }
}

struct TrainArgs {
  std::string config, data, out, arch, trace, accountant;
};

inline void train_cmd(const Context& ctx, const TrainArgs& a) {
  const DpSgdConfig cfg = parse_train_config(read_file(a.config));
  const LoadedData data = load_data(a.data);
  const ModelSpec spec = a.arch.empty() ? default_arch(data) : parse_model_spec(a.arch);
  ctx.info("training " + to_string(spec) + " on " + std::to_string(data.subjects.size()) + " subjects");
  const TrainTrace trace = train(spec, data.subjects, cfg);
  save_checkpoint(a.out, spec, trace.params);
  if (!a.trace.empty()) write_file_atomic(a.trace, trace.steps_csv());
  if (!a.accountant.empty()) {
    if (!cfg.is_private) throw std::invalid_argument("--accountant requires a private run");
    write_file_atomic(a.accountant, accountant_csv(trace.accountant, cfg.target_delta));
  }
  ctx.out << "final_loss=" << format_double(trace.epoch_loss.empty() ? dataset_loss(spec, trace.params, data.subjects)
                                                                      : trace.epoch_loss.back())
          << '\n';
  if (trace.final_epsilon) {
    ctx.out << "epsilon=" << format_double(trace.final_epsilon->epsilon)
            << " delta=" << format_double(cfg.target_delta) << " sigma=" << format_double(trace.sigma) << '\n';
  }
}

struct AnalyzeArgs {
  std::string model, data, out;
  std::optional<double> sigma, clip;
  bool compare_expanded = false;
  double tolerance = 1e-8;
  std::size_t jobs = 1, limit = 0;
};

inline void analyze_plis(const Context& ctx, const AnalyzeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const LoadedData data = load_data(a.data);
  const auto subjects = first_subjects(data, a.limit);
  const PlOptions opt{a.sigma, a.clip};
  opt.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto reports = plis_reports(ck.spec, ck.params, subjects, opt, a.jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.debug("plis for " + std::to_string(subjects.size()) + " subjects in " + format_double(secs) + " s");
  const std::filesystem::path dir = a.out;
  write_file_atomic(dir / "plis_report.csv", plis_report_csv(reports));
  for (const auto& r : reports) emit_heatmap(as_matrix(r.plis), dir / "heatmaps" / r.subject_id);
  if (a.compare_expanded) {
    const auto expanded = parallel_map(subjects.size(), a.jobs, [&](std::size_t i) {
      return plis_expanded(ck.spec, ck.params, subjects[i], opt);
    });
    CsvWriter csv({"subject_id", "max_rel_deviation"});
    double worst = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      double dev = 0.0;
      for (std::size_t k = 0; k < reports[i].plis.numel(); ++k) {
        const double x = reports[i].plis[k], y = expanded[i].plis[k];
        const double s = std::max(std::abs(x), std::abs(y));
        if (s > 0.0) dev = std::max(dev, std::abs(x - y) / s);
      }
      worst = std::max(worst, dev);
      csv.row_strings({reports[i].subject_id, format_double(dev)});
    }
    write_file_atomic(dir / "compare_expanded.csv", csv.str());
    ctx.out << "max_rel_deviation=" << format_double(worst) << '\n';
    if (!(worst <= a.tolerance)) {
      throw std::runtime_error("direct and expanded PLIS disagree: max relative deviation " +
                               format_double(worst) + " > " + format_double(a.tolerance));
    }
  }
  ctx.out << "analyzed " << reports.size() << " subjects\n";
}

inline void analyze_fil(const Context& ctx, const AnalyzeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const LoadedData data = load_data(a.data);
  const auto subjects = first_subjects(data, a.limit);
  const auto reports = parallel_map(subjects.size(), a.jobs, [&](std::size_t i) {
    return fim_subject(ck.spec, ck.params, subjects[i], *a.sigma);
  });
  std::vector<std::string> header{"subject_id", "fil_subject"};
  const std::size_t d = shape_numel(ck.spec.input_shape);
  for (std::size_t j = 0; j < d; ++j) header.push_back("fil_" + std::to_string(j));
  CsvWriter csv(header);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.subject_id, format_double(r.fil_subject)};
    for (double v : r.fil_per_attribute) row.push_back(format_double(v));
    csv.row_strings(row);
  }
  write_file_atomic(a.out, csv.str());
  ctx.out << "analyzed " << reports.size() << " subjects\n";
}

inline void analyze_jacsens(const Context& ctx, const AnalyzeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const LoadedData data = load_data(a.data);
  const auto subjects = first_subjects(data, a.limit);
  const auto reports = parallel_map(subjects.size(), a.jobs, [&](std::size_t i) {
    return jacsens_subject(ck.spec, ck.params, subjects[i]);
  });
  CsvWriter csv({"subject_id", "spectral_norm", "frobenius_norm"});
  for (const auto& r : reports) {
    csv.row_strings({r.subject_id, format_double(r.spectral_norm), format_double(r.frobenius_norm)});
  }
  write_file_atomic(a.out, csv.str());
  ctx.out << "analyzed " << reports.size() << " subjects\n";
}

inline void rank_cmd(const Context& ctx, const AnalyzeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const LoadedData data = load_data(a.data);
  const auto subjects = first_subjects(data, a.limit);
  const auto ranking = rank_subjects(subjects, ck.spec, ck.params, {a.sigma, a.clip}, a.jobs);
  write_file_atomic(a.out, ranking_csv(ranking));
  ctx.out << "ranked " << ranking.size() << " subjects; top " << ranking.front().subject_id << '\n';
}

struct AttackArgs {
  std::string model, data, subject, out;
  AttackConfig config;
  std::string match = "cosine";
  std::optional<double> dp_clip, dp_sigma;
  std::uint64_t dp_seed = 0;
};

inline void attack_cmd(const Context& ctx, AttackArgs a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const LoadedData data = load_data(a.data);
  const SubjectRecord& s = find_subject(data, a.subject);
  std::optional<DpRelease> dp;
  if (a.dp_clip || a.dp_sigma) {
    if (!a.dp_clip || !a.dp_sigma) throw std::invalid_argument("--dp-clip and --dp-sigma go together");
    dp = DpRelease{*a.dp_clip, *a.dp_sigma, a.dp_seed};
  }
  a.config.match = parse_match_loss(a.match);
  a.config.clamp_unit = data.images.has_value();
  const Tensor observed = observe_gradient(ck.spec, ck.params, s, dp);
  const AttackResult r = reconstruct(ck.spec, ck.params, observed, s.y, a.config);
  const std::filesystem::path dir = a.out;
  emit_heatmap(as_matrix(r.reconstruction), dir / "reconstruction");
  write_file_atomic(dir / "trace.csv", r.trace_csv());
  CsvWriter metrics({"subject_id", "match_loss", "cosine", "ssim", "psnr"});
  const double cos = dot(r.reconstruction.data(), s.x.data()) /
                     (l2_norm(r.reconstruction.data()) * l2_norm(s.x.data()));
  std::string ssim_cell, psnr_cell;
  if (data.images) {
    const GrayImage truth = data.images->images.at(static_cast<std::size_t>(&s - data.subjects.data()));
    const GrayImage rec(truth.height, truth.width, r.reconstruction.values());
    if (truth.height >= kSsimWindow && truth.width >= kSsimWindow) ssim_cell = format_double(ssim(rec, truth));
    psnr_cell = format_double(psnr(rec, truth));
  }
  metrics.row_strings({s.id, format_double(r.match_loss), format_double(cos), ssim_cell, psnr_cell});
  write_file_atomic(dir / "metrics.csv", metrics.str());
  ctx.out << "match_loss=" << format_double(r.match_loss);
  if (!ssim_cell.empty()) ctx.out << " ssim=" << ssim_cell;
  ctx.out << '\n';
}

// --- entry point ----------------------------------------------------------------

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  const Context ctx{out, err, log_level_from_env()};
  CLI::App app{"Per-subject privacy analysis for differentially private training"};
  app.name("plis");
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--kind", gen.kind, "images or regression")->check(CLI::IsMember({"images", "regression"}));
  gen_cmd->add_option("--n", gen.n, "Number of subjects")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output file (.plds or .csv)")->required();
  gen_cmd->add_option("--classes", gen.classes, "Image classes (2-4)");
  gen_cmd->add_option("--height", gen.height, "Image height");
  gen_cmd->add_option("--width", gen.width, "Image width");
  gen_cmd->add_option("--ood", gen.ood, "Out-of-distribution images to inject");
  gen_cmd->add_option("--d", gen.d, "Regression features");
  gen_cmd->add_option("--informative", gen.informative, "Informative feature indices")->delimiter(',');
  gen_cmd->add_option("--noise", gen.noise, "Regression label noise sd");

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a model with DP-SGD or plain SGD");
  train_sub->add_option("--config", tr.config, "key=value training config")->required();
  train_sub->add_option("--data", tr.data, "Dataset (.plds or .csv)")->required();
  train_sub->add_option("--out", tr.out, "Checkpoint to write")->required();
  train_sub->add_option("--arch", tr.arch, "Model spec string (default depends on data)");
  train_sub->add_option("--trace", tr.trace, "Per-step trace CSV");
  train_sub->add_option("--accountant", tr.accountant, "Per-step accountant CSV");

  AnalyzeArgs plis_args, fil_args, jac_args, rank_args;
  auto add_common = [](CLI::App* sub, AnalyzeArgs& a, const std::string& out_help) {
    sub->add_option("--model", a.model, "Checkpoint")->required();
    sub->add_option("--data", a.data, "Dataset (.plds or .csv)")->required();
    sub->add_option("--out", a.out, out_help)->required();
    sub->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--limit", a.limit, "Analyze only the first N subjects");
  };
  auto* plis_sub = app.add_subcommand("analyze-plis", "Per-subject privacy loss and PLIS heatmaps");
  add_common(plis_sub, plis_args, "Output directory");
  plis_sub->add_option("--sigma", plis_args.sigma, "Noise sd (omit for the non-private signal)");
  plis_sub->add_option("--clip", plis_args.clip, "Clip threshold applied inside the norm");
  plis_sub->add_flag("--compare-expanded", plis_args.compare_expanded, "Cross-check against the VJP route");
  plis_sub->add_option("--tolerance", plis_args.tolerance, "Allowed relative deviation for the cross-check");

  auto* fil_sub = app.add_subcommand("analyze-fil", "Per-subject Fisher information");
  add_common(fil_sub, fil_args, "Output CSV");
  fil_sub->add_option("--sigma", fil_args.sigma, "Noise sd")->required();

  auto* jac_sub = app.add_subcommand("analyze-jacsens", "Per-subject gradient-input Jacobian norms");
  add_common(jac_sub, jac_args, "Output CSV");

  auto* rank_sub = app.add_subcommand("rank", "Rank subjects by PLIS norm");
  add_common(rank_sub, rank_args, "Output CSV");
  rank_sub->add_option("--sigma", rank_args.sigma, "Noise sd");
  rank_sub->add_option("--clip", rank_args.clip, "Clip threshold");

  AttackArgs at;
  auto* attack_sub = app.add_subcommand("attack", "Gradient inversion of one subject");
  attack_sub->add_option("--model", at.model, "Checkpoint")->required();
  attack_sub->add_option("--data", at.data, "Dataset holding the subject")->required();
  attack_sub->add_option("--subject", at.subject, "Subject id")->required();
  attack_sub->add_option("--out", at.out, "Output directory")->required();
  attack_sub->add_option("--iterations", at.config.iterations, "Optimizer steps");
  attack_sub->add_option("--lr", at.config.learning_rate, "Adam step size");
  attack_sub->add_option("--restarts", at.config.restarts, "Independent restarts");
  attack_sub->add_option("--seed", at.config.seed, "Restart seed");
  attack_sub->add_option("--tv", at.config.tv_weight, "Total-variation weight");
  attack_sub->add_option("--match", at.match, "cosine or l2")->check(CLI::IsMember({"cosine", "l2"}));
  attack_sub->add_flag("--monotone", at.config.monotone, "Backtracking line search");
  attack_sub->add_option("--jobs", at.config.jobs, "Worker threads for restarts");
  attack_sub->add_option("--dp-clip", at.dp_clip, "Release clip threshold");
  attack_sub->add_option("--dp-sigma", at.dp_sigma, "Release noise multiplier");
  attack_sub->add_option("--dp-seed", at.dp_seed, "Release noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (gen_cmd->parsed()) gen_data(ctx, gen);
    else if (train_sub->parsed()) train_cmd(ctx, tr);
    else if (plis_sub->parsed()) analyze_plis(ctx, plis_args);
    else if (fil_sub->parsed()) analyze_fil(ctx, fil_args);
    else if (jac_sub->parsed()) analyze_jacsens(ctx, jac_args);
    else if (rank_sub->parsed()) rank_cmd(ctx, rank_args);
    else if (attack_sub->parsed()) attack_cmd(ctx, at);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace plis::cli
