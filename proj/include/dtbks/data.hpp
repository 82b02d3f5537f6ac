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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dtbks/numerics/tensor.hpp"

namespace dtbks {

enum class TaskKind { kRegression, kClassification };

const char* task_kind_name(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct Dataset {
  Tensor features;                      // N x delta
  Tensor targets;                       // N x m, regression only
  std::vector<std::size_t> labels;      // N, classification only
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::vector<std::string> class_names; // label index -> raw value
  TaskKind task = TaskKind::kRegression;

  std::size_t size() const { return features.rows(); }
  std::size_t num_features() const { return features.cols(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t output_dim() const;

  // Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  // Throws UsageError if row counts disagree or a label is out of range.
  void validate() const;
};

// Schema descriptor: which column is the target and how to read it.
struct Schema {
  std::string target_column;
  TaskKind task = TaskKind::kRegression;
  // Raw target value -> class index. When empty, distinct values are sorted
  // (numerically if all parse as numbers) and numbered from 0.
  std::map<std::string, std::size_t> positive_label_map;
};

// Reads {"target_column", "task", "positive_label_map"} from a JSON file.
Schema load_schema(const std::filesystem::path& path);

// Comma-separated numeric file with an optional header row. A header is
// assumed when any cell of the first line fails to parse as a number; without
// one, target_column must be a zero-based column index.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);

// Reads the named columns, in order, from a CSV file with a header row.
Tensor load_feature_matrix(const std::filesystem::path& path,
                           const std::vector<std::string>& columns);

// z-scores features (and regression targets) with statistics of the data it
// was fitted on. Constant feature columns are dropped.
class Standardizer {
 public:
  static Standardizer fit(const Dataset& train);

  Dataset transform(const Dataset& ds) const;
  // Maps standardized regression outputs back to the original target scale.
  Tensor inverse_targets(const Tensor& standardized) const;
  Tensor inverse_features(const Tensor& standardized) const;

  const std::vector<std::size_t>& kept_columns() const { return kept_; }
  const std::vector<std::size_t>& dropped_columns() const { return dropped_; }
  const std::vector<double>& feature_mean() const { return feature_mean_; }
  const std::vector<double>& feature_std() const { return feature_std_; }
  const std::vector<double>& target_mean() const { return target_mean_; }
  const std::vector<double>& target_std() const { return target_std_; }

  static Standardizer from_parts(std::size_t num_columns, std::vector<std::size_t> kept,
                                 std::vector<double> feature_mean,
                                 std::vector<double> feature_std,
                                 std::vector<double> target_mean, std::vector<double> target_std);

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

 private:
  std::size_t num_columns_ = 0;
  std::vector<std::size_t> kept_;
  std::vector<std::size_t> dropped_;
  std::vector<double> feature_mean_, feature_std_;  // over kept columns
  std::vector<double> target_mean_, target_std_;
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::size_t repeats = 20;
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::uint64_t hash = 0;  // FNV-1a over train rows then test rows
};

// Deterministic in (base_seed, repeat_index). Classification splits are
// stratified: each class contributes its largest-remainder share of the
// ceil(fraction * N) training rows.
Split split(const Dataset& ds, const SplitSpec& spec, std::size_t repeat_index);

std::uint64_t split_hash(std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> test_rows);

// Square root of the mean over examples and output dimensions.
double rmse(const Tensor& pred, const Tensor& truth);
double misclassification_rate(std::span<const std::size_t> pred,
                              std::span<const std::size_t> truth);

}  // namespace dtbks
