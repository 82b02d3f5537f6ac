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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtbks/data.hpp"
#include "dtbks/model.hpp"
#include "dtbks/training.hpp"

namespace dtbks::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitPartial = 4;

enum class Mode { kDtbks, kRksPrior };

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& name);

struct ExperimentConfig {
  std::string name;  // dataset label used in result tables
  std::filesystem::path dataset_path;
  std::filesystem::path schema_path;
  std::size_t layers = 2;
  std::size_t eta = 1;
  FitConfig fit;
  SplitSpec split;
  Mode mode = Mode::kDtbks;
  std::filesystem::path output = "out";

  // Every violated field, one message each. Empty when valid.
  std::vector<std::string> problems() const;
  // Throws ConfigError listing every problem.
  void validate() const;
};

// Parses the JSON config. Unknown keys and malformed values are ConfigErrors.
// Relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Seed of the fit and predict streams for one repeat.
std::uint64_t repeat_seed(std::uint64_t base, std::size_t repeat);

// ---------------------------------------------------------------- artifacts

inline constexpr int kArtifactVersion = 1;

struct ModelArtifact {
  Network network;
  Standardizer standardizer;
  TaskKind task = TaskKind::kRegression;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::size_t k_eval = 100;
  std::size_t mc_rounds = 10;
};

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
nlohmann::json artifact_to_json(const ModelArtifact& a);
ModelArtifact artifact_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const TrainReport& r);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// ---------------------------------------------------------------- benchmark

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t split_hash = 0;
  std::uint64_t seed = 0;
  std::optional<double> metric;
  double baseline = 0.0;
  double seconds = 0.0;
  std::string error;
};

struct ResultRow {
  std::string dataset;
  Mode mode = Mode::kDtbks;
  std::size_t layers = 0;
  std::size_t eta = 0;
  std::string metric_name;  // "rmse" or "misclassification"
  std::vector<RepeatResult> repeats;
  double mean = 0.0;
  double stddev = 0.0;
  double baseline_mean = 0.0;
  double seconds = 0.0;

  std::size_t failures() const;
  // Recomputes mean / stddev / baseline_mean / seconds from the repeats.
  void finalize();
};

// One repeat: split, standardize, fit, predict, metric. Never throws;
// failures are recorded on the result.
RepeatResult run_repeat(const Dataset& ds, const ExperimentConfig& cfg, std::size_t repeat);

// All repeats, `jobs` at a time. Results are ordered by repeat index.
ResultRow run_benchmark(const Dataset& ds, const ExperimentConfig& cfg, std::size_t jobs);

nlohmann::json row_to_json(const ResultRow& row);
ResultRow row_from_json(const nlohmann::json& j);
// Console table; numbers are printed in shortest round-trip form so they are
// identical to those in the results file.
std::string format_table(const std::vector<ResultRow>& rows);

// Default L x eta grid for input dimension delta.
std::vector<std::pair<std::size_t, std::size_t>> default_grid(std::size_t delta);

// ---------------------------------------------------------------- commands

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<Mode> mode;
  std::optional<std::size_t> repeats;
  std::size_t jobs = 1;
  bool grid = false;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

int cmd_train(const ExperimentConfig& cfg);
int cmd_predict(const std::filesystem::path& model, const std::filesystem::path& input,
                const std::filesystem::path& out);
int cmd_benchmark(const ExperimentConfig& cfg, std::size_t jobs, bool grid);
int cmd_ablate(const ExperimentConfig& cfg, std::size_t jobs);
int cmd_selfcheck();

}  // namespace dtbks::cli
