/*
 * Copyright 2026 The dtbks Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>

#include <fmt/core.h>

#include "dtbks/cli.hpp"
#include "dtbks/errors.hpp"
#include "dtbks/numerics/quadrature.hpp"
#include "dtbks/tdivergence.hpp"

namespace dtbks::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Dataset load_dataset(const ExperimentConfig& cfg) {
  return load_csv(cfg.dataset_path, load_schema(cfg.schema_path));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

int exit_for(const std::vector<ResultRow>& rows) {
  for (const ResultRow& r : rows) {
    if (r.failures() > 0) return kExitPartial;
  }
  return kExitOk;
}

void report_failures(const ResultRow& row) {
  for (const RepeatResult& r : row.repeats) {
    if (!r.error.empty()) {
      fmt::print(stderr, "{} [{}] repeat {} failed: {}\n", row.dataset, mode_name(row.mode),
                 r.repeat, r.error);
    }
  }
}

// Chooses (L, eta) on an inner hold-out carved from the first repeat's
// training split; the test side of every repeat is never touched.
std::pair<std::size_t, std::size_t> select_by_grid(const Dataset& ds, const ExperimentConfig& cfg,
                                                   json& trace) {
  const Split outer = split(ds, cfg.split, 0);
  ExperimentConfig inner = cfg;
  inner.split.repeats = 1;
  inner.split.base_seed = cfg.split.base_seed + 1;
  const Standardizer st = Standardizer::fit(outer.train);
  std::pair<std::size_t, std::size_t> best{cfg.layers, cfg.eta};
  double best_metric = std::numeric_limits<double>::infinity();
  trace = json::array();
  for (const auto& [l, e] : default_grid(st.kept_columns().size())) {
    inner.layers = l;
    inner.eta = e;
    const RepeatResult r = run_repeat(outer.train, inner, 0);
    trace.push_back({{"L", l}, {"eta", e},
                     {"validation_metric", r.metric ? json(*r.metric) : json(nullptr)}});
    fmt::print("grid L={} eta={}: {}\n", l, e,
               r.metric ? fmt::format("{}", *r.metric) : "failed: " + r.error);
    if (r.metric && *r.metric < best_metric) {
      best_metric = *r.metric;
      best = {l, e};
    }
  }
  return best;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg);
  const Split s = split(ds, cfg.split, 0);
  const Standardizer st = Standardizer::fit(s.train);
  const Dataset train = st.transform(s.train);
  const Dataset test = st.transform(s.test);
  FitConfig fc = cfg.fit;
  fc.seed = repeat_seed(cfg.fit.seed, 0);
  const Structure structure = Structure::for_dataset(train, cfg.layers, cfg.eta, fc.sigma_y2,
                                                     cfg.mode == Mode::kRksPrior);
  FitResult fitted;
  try {
    fitted = fit(train, fc, structure);
  } catch (const NumericalError& e) {
    fmt::print(stderr, "training aborted: {}\n", e.what());
    return kExitNumerical;
  }
  const ModelArtifact artifact{fitted.network, st, ds.task, ds.feature_names, ds.class_names,
                               fc.k_eval, fc.mc_rounds};
  write_json(cfg.output / "model.json", artifact_to_json(artifact));
  json report = report_to_json(fitted.report);
  report["split_hash"] = fmt::format("{:016x}", s.hash);
  report["seed"] = fc.seed;
  write_json(cfg.output / "train_report.json", report);
  write_json(cfg.output / "config.json", to_json(cfg));
  fmt::print("trained {} ({}, L={}, eta={}) in {:.1f}s over {} iterations; wrote {}\n", cfg.name,
             mode_name(cfg.mode), cfg.layers, cfg.eta, fitted.report.wall_seconds,
             fitted.report.iterations, (cfg.output / "model.json").string());
  return kExitOk;
}

int cmd_predict(const fs::path& model, const fs::path& input, const fs::path& out) {
  const ModelArtifact a = artifact_from_json(read_json(model));
  const Tensor raw = load_feature_matrix(input, a.feature_names);
  Dataset ds;
  ds.features = raw;
  ds.feature_names = a.feature_names;
  ds.task = a.task;
  ds.class_names = a.class_names;
  if (a.task == TaskKind::kRegression) ds.targets = Tensor({raw.rows(), 1});
  else ds.labels.assign(raw.rows(), 0);
  const Dataset z = a.standardizer.transform(ds);
  RngStream rng(0);
  const auto preds = forward_predict_batch(z.features, a.network, rng, a.mc_rounds, a.k_eval);
  std::string text;
  if (a.task == TaskKind::kRegression) {
    Tensor p({preds.size(), 1});
    for (std::size_t i = 0; i < preds.size(); ++i) p[i] = preds[i].output[0];
    const Tensor y = a.standardizer.inverse_targets(p);
    text = "prediction\n";
    for (double v : y.data()) text += fmt::format("{}\n", v);
  } else {
    text = "label";
    for (const std::string& c : a.class_names) text += ",p_" + c;
    text += "\n";
    for (const Prediction& p : preds) {
      text += a.class_names[*p.label];
      for (double v : p.output) text += fmt::format(",{}", v);
      text += "\n";
    }
  }
  write_text(out, text);
  fmt::print("wrote {} predictions to {}\n", preds.size(), out.string());
  return kExitOk;
}

int cmd_benchmark(const ExperimentConfig& cfg_in, std::size_t jobs, bool grid) {
  cfg_in.validate();
  ExperimentConfig cfg = cfg_in;
  const Dataset ds = load_dataset(cfg);
  json results = {{"format", "dtbks-results"}, {"version", 1}};
  if (grid) {
    json trace;
    std::tie(cfg.layers, cfg.eta) = select_by_grid(ds, cfg, trace);
    results["grid"] = trace;
    fmt::print("selected L={} eta={}\n", cfg.layers, cfg.eta);
  }
  const ResultRow row = run_benchmark(ds, cfg, jobs);
  report_failures(row);
  results["config"] = to_json(cfg);
  results["rows"] = json::array({row_to_json(row)});
  const std::string table = format_table({row});
  write_json(cfg.output / "results.json", results);
  write_text(cfg.output / "results.txt", table);
  fmt::print("{}", table);
  return exit_for({row});
}

int cmd_ablate(const ExperimentConfig& cfg_in, std::size_t jobs) {
  cfg_in.validate();
  const Dataset ds = load_dataset(cfg_in);
  std::vector<ResultRow> rows;
  for (Mode m : {Mode::kDtbks, Mode::kRksPrior}) {
    ExperimentConfig cfg = cfg_in;
    cfg.mode = m;
    rows.push_back(run_benchmark(ds, cfg, jobs));
    report_failures(rows.back());
  }
  json pairs = json::array();
  bool paired = true;
  for (std::size_t i = 0; i < rows[0].repeats.size(); ++i) {
    const RepeatResult& a = rows[0].repeats[i];
    const RepeatResult& b = rows[1].repeats[i];
    paired = paired && a.split_hash == b.split_hash && a.seed == b.seed;
    pairs.push_back({{"repeat", i},
                     {"split_hash_dtbks", fmt::format("{:016x}", a.split_hash)},
                     {"split_hash_rks_prior", fmt::format("{:016x}", b.split_hash)}});
  }
  json results = {{"format", "dtbks-ablation"}, {"version", 1},
                  {"config", to_json(cfg_in)}, {"paired", paired}, {"pairs", pairs},
                  {"rows", json::array({row_to_json(rows[0]), row_to_json(rows[1])})}};
  const std::string table = format_table(rows);
  write_json(cfg_in.output / "ablation.json", results);
  write_text(cfg_in.output / "ablation.txt", table);
  fmt::print("{}", table);
  if (!paired) {
    fmt::print(stderr, "error: modes did not share splits and seeds\n");
    return kExitPartial;
  }
  return exit_for(rows);
}

int cmd_selfcheck() {
  int failed = 0;
  auto check = [&](const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
    std::string detail;
    bool ok = false;
    try {
      std::tie(ok, detail) = body();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    failed += !ok;
    fmt::print("{} {}: {}\n", ok ? "PASS" : "FAIL", name, detail);
  };

  check("density normalization", [] {
    double worst = 0.0;
    for (double nu : {0.5, 2.1, 5.0, 50.0}) {
      const DiagStudentT q({0.0}, {1.0}, nu);
      for (const DiagStudentT& d : {q, escort(q)}) {
        const double z = integrate_real_line(
                             [&](double x) {
                               return std::exp(log_pdf(std::span<const double>(&x, 1), d));
                             },
                             0.0, 1.0)
                             .value;
        worst = std::max(worst, std::abs(z - 1.0));
      }
    }
    return std::pair{worst < 1e-6, fmt::format("max |integral - 1| = {:.2e}", worst)};
  });

  check("divergence closed form vs quadrature (matched nu)", [] {
    RngStream rng(1);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const double nu = 2.1;
      const DiagStudentT q({6.0 * rng.uniform() - 3.0}, {0.1 + 9.9 * rng.uniform()}, nu);
      const double closed = dt_closed(q, nu).total;
      const double quad = dt_quadrature(q, DiagStudentT::standard(1, nu), t_of(nu));
      worst = std::max(worst, std::abs(closed - quad) / std::max(std::abs(quad), 1e-12));
    }
    return std::pair{worst < 1e-4, fmt::format("max relative error = {:.2e}", worst)};
  });

  check("divergence zero at prior", [] {
    const double d = dt_closed(DiagStudentT::standard(5, 2.1), 2.1).total;
    return std::pair{std::abs(d) <= 1e-10, fmt::format("value = {:.2e}", d)};
  });

  check("objective gradient vs finite differences", [] {
    FitConfig cfg;
    cfg.bank_size = 5;
    cfg.k_train = 2;
    cfg.learn_nu = true;
    RngStream rng(2);
    Dataset ds;
    ds.features = Tensor({4, 3});
    ds.targets = Tensor({4, 1});
    for (double& v : ds.features.data()) v = rng.normal();
    for (double& v : ds.targets.data()) v = rng.normal();
    const Network skeleton = init_from_prior(Structure{3, 2, 2, Regression{0.3}, false}, cfg);
    RawParams raw = to_raw(skeleton);
    for (RawLayer& l : raw.layers) {
      for (Tensor* t : {&l.mu_omega, &l.rho_omega, &l.mu_w, &l.rho_w}) {
        for (double& v : t->data()) v += 0.3 * rng.normal();
      }
    }
    const auto noise = draw_training_noise(rng, from_raw(raw, skeleton, true), 2);
    const std::vector<std::size_t> rows = {0, 1, 2, 3};
    const Batch batch = make_batch(ds, rows);
    Graph g;
    Objective obj = objective(g, raw, skeleton, batch, noise, cfg, 4);
    g.backward(obj.loss);
    double worst = 0.0;
    for (std::size_t k = 0; k < obj.groups.size(); ++k) {
      const Tensor grad = g.adjoint(obj.leaves[k]);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        RawParams plus = raw, minus = raw;
        trainable_groups(plus, skeleton, true)[k].value->data()[i] += 1e-5;
        trainable_groups(minus, skeleton, true)[k].value->data()[i] -= 1e-5;
        Graph gp, gm;
        const double fd =
            (objective(gp, plus, skeleton, batch, noise, cfg, 4).loss.value().item() -
             objective(gm, minus, skeleton, batch, noise, cfg, 4).loss.value().item()) / 2e-5;
        worst = std::max(worst, std::abs(grad[i] - fd) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3}));
      }
    }
    return std::pair{worst < 1e-4, fmt::format("max relative error = {:.2e}", worst)};
  });

  check("Gaussian limit", [] {
    const DiagStudentT d = DiagStudentT::standard(1, 1e6);
    double worst = 0.0;
    for (double y = -5.0; y <= 5.0; y += 0.01) {
      const double n = std::exp(-0.5 * y * y) / std::sqrt(2.0 * std::numbers::pi);
      worst = std::max(worst, std::abs(std::exp(log_pdf(std::span<const double>(&y, 1), d)) - n));
    }
    return std::pair{worst < 1e-5, fmt::format("sup gap = {:.2e}", worst)};
  });

  fmt::print("{} check(s) failed\n", failed);
  return failed == 0 ? kExitOk : kExitNumerical;
}

}  // namespace dtbks::cli
