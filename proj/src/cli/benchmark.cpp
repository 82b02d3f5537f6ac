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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include <fmt/core.h>

#include "dtbks/cli.hpp"
#include "dtbks/errors.hpp"

namespace dtbks::cli {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPredictStream = 7;

double baseline_metric(const Dataset& train, const Dataset& test) {
  if (test.task == TaskKind::kRegression) {
    // Standardized targets: the training mean is zero.
    return rmse(Tensor(test.targets.shape(), 0.0), test.targets);
  }
  std::vector<std::size_t> counts(train.num_classes(), 0);
  for (std::size_t l : train.labels) ++counts[l];
  const std::size_t majority =
      static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  return misclassification_rate(std::vector<std::size_t>(test.size(), majority), test.labels);
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

std::size_t ResultRow::failures() const {
  return static_cast<std::size_t>(std::count_if(
      repeats.begin(), repeats.end(), [](const RepeatResult& r) { return !r.metric; }));
}

void ResultRow::finalize() {
  std::vector<double> values;
  double base = 0.0;
  seconds = 0.0;
  for (const RepeatResult& r : repeats) {
    if (r.metric) {
      values.push_back(*r.metric);
      base += r.baseline;
    }
    seconds += r.seconds;
  }
  mean = stddev = baseline_mean = std::nan("");
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  mean = 0.0;
  for (double v : values) mean += v / n;
  baseline_mean = base / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

RepeatResult run_repeat(const Dataset& ds, const ExperimentConfig& cfg, std::size_t repeat) {
  RepeatResult r;
  r.repeat = repeat;
  r.seed = repeat_seed(cfg.fit.seed, repeat);
  const auto start = std::chrono::steady_clock::now();
  try {
    const Split s = split(ds, cfg.split, repeat);
    r.split_hash = s.hash;
    const Standardizer st = Standardizer::fit(s.train);
    const Dataset train = st.transform(s.train);
    const Dataset test = st.transform(s.test);
    r.baseline = baseline_metric(train, test);
    FitConfig fc = cfg.fit;
    fc.seed = r.seed;
    const Structure structure = Structure::for_dataset(train, cfg.layers, cfg.eta, fc.sigma_y2,
                                                       cfg.mode == Mode::kRksPrior);
    const FitResult fitted = fit(train, fc, structure);
    RngStream rng = RngStream(r.seed).child(kPredictStream);
    const auto preds = forward_predict_batch(test.features, fitted.network, rng, fc.mc_rounds,
                                             fc.k_eval);
    if (test.task == TaskKind::kRegression) {
      Tensor p(test.targets.shape());
      for (std::size_t i = 0; i < preds.size(); ++i) {
        std::copy(preds[i].output.begin(), preds[i].output.end(), p.row(i).begin());
      }
      r.metric = rmse(p, test.targets);
    } else {
      std::vector<std::size_t> labels;
      for (const Prediction& p : preds) labels.push_back(*p.label);
      r.metric = misclassification_rate(labels, test.labels);
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

ResultRow run_benchmark(const Dataset& ds, const ExperimentConfig& cfg, std::size_t jobs) {
  ResultRow row;
  row.dataset = cfg.name;
  row.mode = cfg.mode;
  row.layers = cfg.layers;
  row.eta = cfg.eta;
  row.metric_name = ds.task == TaskKind::kRegression ? "rmse" : "misclassification";
  row.repeats.resize(cfg.split.repeats);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < row.repeats.size();) row.repeats[i] = run_repeat(ds, cfg, i);
  };
  const std::size_t n = std::clamp<std::size_t>(jobs, 1, row.repeats.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  row.finalize();
  return row;
}

json row_to_json(const ResultRow& row) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json repeats = json::array();
  for (const RepeatResult& r : row.repeats) {
    json e = {{"repeat", r.repeat},
              {"split_hash", hex(r.split_hash)},
              {"seed", r.seed},
              {"metric", r.metric ? json(*r.metric) : json(nullptr)},
              {"baseline", r.baseline},
              {"seconds", r.seconds}};
    if (!r.error.empty()) e["error"] = r.error;
    repeats.push_back(std::move(e));
  }
  return {{"dataset", row.dataset},   {"mode", mode_name(row.mode)},
          {"L", row.layers},          {"eta", row.eta},
          {"metric", row.metric_name}, {"mean", num(row.mean)},
          {"std", num(row.stddev)},   {"baseline_mean", num(row.baseline_mean)},
          {"failures", row.failures()}, {"seconds", row.seconds},
          {"repeats", repeats}};
}

ResultRow row_from_json(const json& j) {
  ResultRow row;
  row.dataset = j.at("dataset").get<std::string>();
  row.mode = parse_mode(j.at("mode").get<std::string>());
  row.layers = j.at("L").get<std::size_t>();
  row.eta = j.at("eta").get<std::size_t>();
  row.metric_name = j.at("metric").get<std::string>();
  for (const json& e : j.at("repeats")) {
    RepeatResult r;
    r.repeat = e.at("repeat").get<std::size_t>();
    r.split_hash = std::stoull(e.at("split_hash").get<std::string>(), nullptr, 16);
    r.seed = e.at("seed").get<std::uint64_t>();
    if (!e.at("metric").is_null()) r.metric = e.at("metric").get<double>();
    r.baseline = e.at("baseline").get<double>();
    r.seconds = e.at("seconds").get<double>();
    if (e.contains("error")) r.error = e.at("error").get<std::string>();
    row.repeats.push_back(std::move(r));
  }
  row.finalize();
  return row;
}

std::string format_table(const std::vector<ResultRow>& rows) {
  std::string out = fmt::format("{:<16} {:<9} {:>2} {:>4} {:<17} {:<22} {:<22} {:<22} {:>6} {:>8}\n",
                                "dataset", "mode", "L", "eta", "metric", "mean", "std",
                                "baseline", "failed", "seconds");
  for (const ResultRow& r : rows) {
    out += fmt::format("{:<16} {:<9} {:>2} {:>4} {:<17} {:<22} {:<22} {:<22} {:>6} {:>8.1f}\n",
                       r.dataset, mode_name(r.mode), r.layers, r.eta, r.metric_name,
                       fmt::format("{}", r.mean), fmt::format("{}", r.stddev),
                       fmt::format("{}", r.baseline_mean), r.failures(), r.seconds);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> default_grid(std::size_t delta) {
  auto ceil_frac = [&](std::size_t num, std::size_t den) {
    return std::max<std::size_t>(1, (delta * num + den - 1) / den);
  };
  std::vector<std::size_t> etas = {ceil_frac(1, 4), ceil_frac(1, 2), ceil_frac(3, 4), delta};
  etas.erase(std::unique(etas.begin(), etas.end()), etas.end());
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  for (std::size_t l = 2; l <= 5; ++l) {
    for (std::size_t e : etas) grid.emplace_back(l, e);
  }
  return grid;
}

}  // namespace dtbks::cli
