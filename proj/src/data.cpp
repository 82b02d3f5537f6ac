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

#include "dtbks/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/rng.hpp"

namespace dtbks {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (std::string& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::size_t ceil_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

}  // namespace

const char* task_kind_name(TaskKind kind) {
  return kind == TaskKind::kRegression ? "regression" : "classification";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "regression") return TaskKind::kRegression;
  if (name == "classification") return TaskKind::kClassification;
  throw ConfigError("unknown task '" + name + "' (expected regression or classification)");
}

std::size_t Dataset::output_dim() const {
  return task == TaskKind::kRegression ? targets.cols() : num_classes();
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.feature_names = feature_names;
  out.target_names = target_names;
  out.class_names = class_names;
  out.task = task;
  const std::size_t d = num_features();
  out.features = Tensor({rows.size(), d});
  if (task == TaskKind::kRegression) out.targets = Tensor({rows.size(), targets.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw UsageError("subset row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(features.row(rows[i]).begin(), d, out.features.row(i).begin());
    if (task == TaskKind::kRegression) {
      std::copy_n(targets.row(rows[i]).begin(), targets.cols(), out.targets.row(i).begin());
    } else {
      out.labels.push_back(labels[rows[i]]);
    }
  }
  return out;
}

void Dataset::validate() const {
  if (features.rank() != 2) throw UsageError("features must be a matrix");
  if (task == TaskKind::kRegression) {
    if (targets.rank() != 2 || targets.rows() != size()) {
      throw UsageError("targets have " + std::to_string(targets.rows()) + " rows, features " +
                       std::to_string(size()));
    }
  } else {
    if (labels.size() != size()) {
      throw UsageError("labels have " + std::to_string(labels.size()) + " rows, features " +
                       std::to_string(size()));
    }
    for (std::size_t l : labels) {
      if (l >= num_classes()) throw UsageError("label " + std::to_string(l) + " out of range");
    }
  }
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open schema " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("schema " + path.string() + ": " + e.what());
  }
  Schema s;
  for (const auto& [key, value] : j.items()) {
    if (key == "target_column") {
      s.target_column = value.get<std::string>();
    } else if (key == "task") {
      s.task = parse_task_kind(value.get<std::string>());
    } else if (key == "positive_label_map") {
      for (const auto& [raw, idx] : value.items()) s.positive_label_map[raw] = idx.get<std::size_t>();
    } else {
      throw ConfigError("schema " + path.string() + ": unknown key '" + key + "'");
    }
  }
  if (s.target_column.empty()) throw ConfigError("schema " + path.string() + ": missing target_column");
  return s;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(split_line(line));
    line_numbers.push_back(ln);
  }
  if (rows.empty()) throw IngestionError(path.string() + ": no data");

  bool header = false;
  double tmp;
  for (const std::string& c : rows.front()) header = header || !parse_double(c, tmp);
  const std::size_t width = rows.front().size();
  std::vector<std::string> names;
  if (header) {
    names = rows.front();
  } else {
    for (std::size_t c = 0; c < width; ++c) names.push_back(std::to_string(c));
  }

  std::size_t target = width;
  for (std::size_t c = 0; c < width; ++c) {
    if (names[c] == schema.target_column) target = c;
  }
  if (target == width) {
    throw IngestionError(path.string() + ": unknown target column '" + schema.target_column +
                         "'");
  }

  const std::size_t first = header ? 1 : 0;
  const std::size_t n = rows.size() - first;
  if (n == 0) throw IngestionError(path.string() + ": header but no data rows");
  Dataset ds;
  ds.task = schema.task;
  for (std::size_t c = 0; c < width; ++c) {
    if (c != target) ds.feature_names.push_back(names[c]);
  }
  ds.target_names = {names[target]};
  ds.features = Tensor({n, width - 1});
  if (ds.task == TaskKind::kRegression) ds.targets = Tensor({n, 1});
  std::vector<std::string> raw_targets(n);

  for (std::size_t r = 0; r < n; ++r) {
    const auto& cells = rows[first + r];
    const std::string where =
        path.string() + ": row " + std::to_string(r + 1) + " (line " +
        std::to_string(line_numbers[first + r]) + ")";
    if (cells.size() != width) {
      throw IngestionError(where + " has " + std::to_string(cells.size()) + " fields, expected " +
                           std::to_string(width));
    }
    std::size_t col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == target) {
        raw_targets[r] = cells[c];
        continue;
      }
      double v;
      if (!parse_double(cells[c], v)) {
        throw IngestionError(where + ", column '" + names[c] + "': non-numeric value '" +
                             cells[c] + "'");
      }
      ds.features.at(r, col++) = v;
    }
    if (ds.task == TaskKind::kRegression) {
      double v;
      if (!parse_double(raw_targets[r], v)) {
        throw IngestionError(where + ", column '" + names[target] + "': non-numeric target '" +
                             raw_targets[r] + "'");
      }
      ds.targets.at(r, 0) = v;
    }
  }

  if (ds.task == TaskKind::kClassification) {
    std::map<std::string, std::size_t> mapping = schema.positive_label_map;
    if (mapping.empty()) {
      std::vector<std::string> distinct(raw_targets);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      const bool numeric = std::all_of(distinct.begin(), distinct.end(),
                                       [&](const std::string& s) { return parse_double(s, tmp); });
      if (numeric) {
        std::stable_sort(distinct.begin(), distinct.end(), [](const auto& a, const auto& b) {
          return std::stod(a) < std::stod(b);
        });
      }
      for (std::size_t i = 0; i < distinct.size(); ++i) mapping[distinct[i]] = i;
    }
    std::set<std::size_t> indices;
    for (const auto& [raw, idx] : mapping) indices.insert(idx);
    if (indices.size() != mapping.size() || *indices.rbegin() + 1 != mapping.size()) {
      throw IngestionError(path.string() + ": label map must use indices 0..C-1 exactly once");
    }
    ds.class_names.resize(mapping.size());
    for (const auto& [raw, idx] : mapping) ds.class_names[idx] = raw;
    ds.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto it = mapping.find(raw_targets[r]);
      if (it == mapping.end()) {
        throw IngestionError(path.string() + ": row " + std::to_string(r + 1) +
                             ": label '" + raw_targets[r] + "' is not in the label map");
      }
      ds.labels[r] = it->second;
    }
  }
  return ds;
}

Tensor load_feature_matrix(const std::filesystem::path& path,
                           const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path.string() + ": no header row");
  const std::vector<std::string> header = split_line(line);
  std::vector<std::size_t> index;
  for (const std::string& c : columns) {
    const auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw IngestionError(path.string() + ": missing column '" + c + "'");
    index.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    ++rows;
    if (cells.size() != header.size()) {
      throw IngestionError(path.string() + ": row " + std::to_string(rows) + " (line " +
                           std::to_string(ln) + ") has " + std::to_string(cells.size()) +
                           " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t k = 0; k < index.size(); ++k) {
      double v;
      if (!parse_double(cells[index[k]], v)) {
        throw IngestionError(path.string() + ": row " + std::to_string(rows) + ", column '" +
                             columns[k] + "': non-numeric value '" + cells[index[k]] + "'");
      }
      values.push_back(v);
    }
  }
  return Tensor({rows, columns.size()}, std::move(values));
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.size() == 0) throw UsageError("cannot standardize an empty dataset");
  Standardizer s;
  s.num_columns_ = train.num_features();
  const double n = static_cast<double>(train.size());
  for (std::size_t c = 0; c < train.num_features(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < train.size(); ++r) mean += train.features.at(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < train.size(); ++r) {
      const double d = train.features.at(r, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.kept_.push_back(c);
      s.feature_mean_.push_back(mean);
      s.feature_std_.push_back(sd);
    } else {
      s.dropped_.push_back(c);
      fmt::print(stderr, "warning: dropping constant feature column '{}'\n",
                 c < train.feature_names.size() ? train.feature_names[c] : std::to_string(c));
    }
  }
  if (s.kept_.empty()) throw UsageError("every feature column is constant");
  if (train.task == TaskKind::kRegression) {
    for (std::size_t c = 0; c < train.targets.cols(); ++c) {
      double mean = 0.0, var = 0.0;
      for (std::size_t r = 0; r < train.size(); ++r) mean += train.targets.at(r, c);
      mean /= n;
      for (std::size_t r = 0; r < train.size(); ++r) {
        var += (train.targets.at(r, c) - mean) * (train.targets.at(r, c) - mean);
      }
      const double sd = std::sqrt(var / n);
      s.target_mean_.push_back(mean);
      s.target_std_.push_back(sd > 0.0 ? sd : 1.0);
    }
  }
  return s;
}

Standardizer Standardizer::from_parts(std::size_t num_columns, std::vector<std::size_t> kept,
                                      std::vector<double> feature_mean,
                                      std::vector<double> feature_std,
                                      std::vector<double> target_mean,
                                      std::vector<double> target_std) {
  Standardizer s;
  s.num_columns_ = num_columns;
  if (kept.size() != feature_mean.size() || kept.size() != feature_std.size() ||
      target_mean.size() != target_std.size()) {
    throw UsageError("standardizer parts have inconsistent lengths");
  }
  for (std::size_t c = 0, k = 0; c < num_columns; ++c) {
    if (k < kept.size() && kept[k] == c) {
      ++k;
    } else {
      s.dropped_.push_back(c);
    }
  }
  s.kept_ = std::move(kept);
  s.feature_mean_ = std::move(feature_mean);
  s.feature_std_ = std::move(feature_std);
  s.target_mean_ = std::move(target_mean);
  s.target_std_ = std::move(target_std);
  return s;
}

Dataset Standardizer::transform(const Dataset& ds) const {
  if (ds.num_features() != num_columns_) {
    throw UsageError("standardizer fitted on " + std::to_string(num_columns_) +
                     " columns, dataset has " + std::to_string(ds.num_features()));
  }
  Dataset out = ds;
  out.features = Tensor({ds.size(), kept_.size()});
  out.feature_names.clear();
  for (std::size_t k = 0; k < kept_.size(); ++k) {
    if (kept_[k] < ds.feature_names.size()) out.feature_names.push_back(ds.feature_names[kept_[k]]);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      out.features.at(r, k) = (ds.features.at(r, kept_[k]) - feature_mean_[k]) / feature_std_[k];
    }
  }
  if (ds.task == TaskKind::kRegression) {
    if (ds.targets.cols() != target_mean_.size()) throw UsageError("target dimension mismatch");
    for (std::size_t r = 0; r < ds.size(); ++r) {
      for (std::size_t c = 0; c < target_mean_.size(); ++c) {
        out.targets.at(r, c) = (ds.targets.at(r, c) - target_mean_[c]) / target_std_[c];
      }
    }
  }
  return out;
}

Tensor Standardizer::inverse_targets(const Tensor& standardized) const {
  if (standardized.cols() != target_mean_.size()) throw UsageError("target dimension mismatch");
  Tensor out = standardized;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out.at(r, c) = standardized.at(r, c) * target_std_[c] + target_mean_[c];
    }
  }
  return out;
}

Tensor Standardizer::inverse_features(const Tensor& standardized) const {
  if (standardized.cols() != kept_.size()) throw UsageError("feature dimension mismatch");
  Tensor out({standardized.rows(), num_columns_});
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t k = 0; k < kept_.size(); ++k) {
      out.at(r, kept_[k]) = standardized.at(r, k) * feature_std_[k] + feature_mean_[k];
    }
  }
  return out;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
}

std::uint64_t split_hash(std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> test_rows) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t r : train_rows) mix(r);
  mix(~std::uint64_t{0});
  for (std::size_t r : test_rows) mix(r);
  return h;
}

Split split(const Dataset& ds, const SplitSpec& spec, std::size_t repeat_index) {
  spec.validate();
  if (repeat_index >= spec.repeats) {
    throw UsageError("repeat index " + std::to_string(repeat_index) + " >= repeats " +
                     std::to_string(spec.repeats));
  }
  const std::size_t n = ds.size();
  RngStream rng = RngStream(spec.base_seed).child(repeat_index);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  const std::size_t n_train = ceil_count(spec.train_fraction, n);
  Split out;
  if (ds.task == TaskKind::kRegression) {
    out.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  } else {
    const std::size_t c = ds.num_classes();
    std::vector<std::size_t> counts(c, 0);
    for (std::size_t l : ds.labels) ++counts[l];
    std::vector<std::size_t> quota(c);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const double exact = static_cast<double>(n_train) * static_cast<double>(counts[k]) /
                           static_cast<double>(n);
      quota[k] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[k];
      remainders.emplace_back(exact - std::floor(exact), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n_train; ++i, ++assigned) ++quota[remainders[i].second];
    for (std::size_t k = 0; k < c; ++k) {
      if (counts[k] > 0 && quota[k] == 0) {
        throw SplitError("class '" + ds.class_names[k] + "' is absent from the training split");
      }
    }
    std::vector<std::size_t> taken(c, 0);
    for (std::size_t r : perm) {
      const std::size_t l = ds.labels[r];
      if (taken[l] < quota[l]) {
        ++taken[l];
        out.train_rows.push_back(r);
      } else {
        out.test_rows.push_back(r);
      }
    }
  }
  if (out.train_rows.empty() || out.test_rows.empty()) {
    throw SplitError("degenerate split: " + std::to_string(out.train_rows.size()) + " train / " +
                     std::to_string(out.test_rows.size()) + " test rows");
  }
  out.train = ds.subset(out.train_rows);
  out.test = ds.subset(out.test_rows);
  out.hash = split_hash(out.train_rows, out.test_rows);
  return out;
}

double rmse(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw UsageError("rmse: prediction shape " + shape_string(pred.shape()) + " != truth " +
                     shape_string(truth.shape()));
  }
  if (pred.empty()) throw UsageError("rmse: no predictions");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double misclassification_rate(std::span<const std::size_t> pred,
                              std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) {
    throw UsageError("misclassification_rate: " + std::to_string(pred.size()) +
                     " predictions for " + std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw UsageError("misclassification_rate: no predictions");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

}  // namespace dtbks
