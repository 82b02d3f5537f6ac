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

#include <CLI11.hpp>
#include <fmt/core.h>

#include "dtbks/cli.hpp"
#include "dtbks/errors.hpp"

namespace {

using namespace dtbks;
using namespace dtbks::cli;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<std::size_t> repeats;
  std::size_t jobs = 1;
  bool grid = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "experiment config (JSON)")->required();
  app->add_option("--seed", f.seed, "override fit and split seeds");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--mode", f.mode, "dtbks or rks-prior");
  app->add_option("--repeats", f.repeats, "number of random splits");
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = load_config(f.config);
  Overrides o;
  o.seed = f.seed;
  if (f.out) o.out = *f.out;
  if (f.mode) o.mode = parse_mode(*f.mode);
  o.repeats = f.repeats;
  apply_overrides(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"t-exponential Bayesian kitchen sinks"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "fit one model on the first split and save it");
  add_common(train, f);

  std::string model, input, predictions = "predictions.csv";
  auto* predict = app.add_subcommand("predict", "predict with a saved model");
  predict->add_option("--model", model, "model.json written by train")->required();
  predict->add_option("--input", input, "CSV with the training feature columns")->required();
  predict->add_option("--out", predictions, "output CSV");

  auto* bench = app.add_subcommand("benchmark", "repeated-split benchmark");
  add_common(bench, f);
  bench->add_option("--jobs", f.jobs, "repeats run in parallel")->check(CLI::PositiveNumber);
  bench->add_flag("--grid", f.grid, "select L and eta on an inner hold-out first");

  auto* ablate = app.add_subcommand("ablate", "paired dtbks vs rks-prior benchmark");
  add_common(ablate, f);
  ablate->add_option("--jobs", f.jobs, "repeats run in parallel")->check(CLI::PositiveNumber);

  app.add_subcommand("selfcheck", "run the numerical property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(resolve(f));
    if (*predict) return cmd_predict(model, input, predictions);
    if (*bench) return cmd_benchmark(resolve(f), f.jobs, f.grid);
    if (*ablate) return cmd_ablate(resolve(f), f.jobs);
    return cmd_selfcheck();
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
