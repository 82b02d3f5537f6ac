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
#include <map>
#include <set>

#include "dtbks/cli.hpp"
#include "dtbks/errors.hpp"
#include "dtbks/numerics/rng.hpp"

namespace dtbks::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& s : items) out += "\n  - " + s;
  return out;
}

// Walks one JSON object, dispatching known keys and collecting problems.
class Section {
 public:
  Section(const json& j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back(where("") + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(where(key) + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  void sub(const std::string& key, const std::function<void(Section&)>& body) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    Section s(j_.at(key), where(key), problems_);
    body(s);
    s.finish();
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) problems_.push_back("unknown key '" + where(key) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    return prefix_.empty() ? key : (key.empty() ? prefix_ : prefix_ + "." + key);
  }
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

}  // namespace

const char* mode_name(Mode mode) { return mode == Mode::kDtbks ? "dtbks" : "rks-prior"; }

Mode parse_mode(const std::string& name) {
  if (name == "dtbks") return Mode::kDtbks;
  if (name == "rks-prior") return Mode::kRksPrior;
  throw ConfigError("invalid mode '" + name + "' (expected dtbks or rks-prior)");
}

std::vector<std::string> ExperimentConfig::problems() const {
  std::vector<std::string> p;
  if (layers < 1) p.push_back("structure.L must be >= 1");
  if (eta < 1) p.push_back("structure.eta must be >= 1");
  if (fit.bank_size < 1) p.push_back("structure.S must be >= 1");
  if (fit.k_train < 1) p.push_back("structure.K_train must be >= 1");
  if (fit.k_eval < 1) p.push_back("structure.K_eval must be >= 1");
  if (fit.batch_size < 1) p.push_back("fit.batch_size must be >= 1");
  if (!(fit.learning_rate > 0.0)) p.push_back("fit.learning_rate must be > 0");
  if (!(fit.adam_beta1 >= 0.0 && fit.adam_beta1 < 1.0)) p.push_back("fit.adam_beta1 must be in [0, 1)");
  if (!(fit.adam_beta2 >= 0.0 && fit.adam_beta2 < 1.0)) p.push_back("fit.adam_beta2 must be in [0, 1)");
  if (!(fit.adam_eps > 0.0)) p.push_back("fit.adam_eps must be > 0");
  if (!(fit.prior_nu > kNuFloor)) p.push_back("fit.prior_nu must be > 0.1");
  if (!(fit.sigma_y2 > 0.0)) p.push_back("fit.sigma_y2 must be > 0");
  if (fit.mc_rounds < 1) p.push_back("fit.mc_rounds must be >= 1");
  if (!(fit.early_stop_rel >= 0.0)) p.push_back("fit.early_stop_rel must be >= 0");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    p.push_back("split.train_fraction must be in (0, 1)");
  }
  if (split.repeats < 1) p.push_back("split.repeats must be >= 1");
  if (dataset_path.empty()) {
    p.push_back("dataset.path is required");
  } else if (!fs::exists(dataset_path)) {
    p.push_back("dataset.path does not exist: " + dataset_path.string());
  }
  if (schema_path.empty()) {
    p.push_back("dataset.schema is required");
  } else if (!fs::exists(schema_path)) {
    p.push_back("dataset.schema does not exist: " + schema_path.string());
  }
  return p;
}

void ExperimentConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw ConfigError("invalid configuration:" + join(p));
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::vector<std::string> problems;
  Section root(j, "", problems);
  int version = 1;
  root.get("version", version);
  if (version != 1) problems.push_back("version must be 1");
  std::string path, schema, mode = "dtbks", output = "out", scale = "full-dataset";
  root.sub("dataset", [&](Section& s) {
    s.get("name", cfg.name);
    s.get("path", path);
    s.get("schema", schema);
  });
  long long layers = 2, eta = 1, bank = 100, k_train = 10, k_eval = 100;
  root.sub("structure", [&](Section& s) {
    s.get("L", layers);
    s.get("eta", eta);
    s.get("S", bank);
    s.get("K_train", k_train);
    s.get("K_eval", k_eval);
  });
  long long epochs = static_cast<long long>(cfg.fit.epochs);
  long long batch = static_cast<long long>(cfg.fit.batch_size);
  long long patience = static_cast<long long>(cfg.fit.early_stop_patience);
  long long mc_rounds = static_cast<long long>(cfg.fit.mc_rounds);
  root.sub("fit", [&](Section& s) {
    s.get("epochs", epochs);
    s.get("batch_size", batch);
    s.get("learning_rate", cfg.fit.learning_rate);
    s.get("adam_beta1", cfg.fit.adam_beta1);
    s.get("adam_beta2", cfg.fit.adam_beta2);
    s.get("adam_eps", cfg.fit.adam_eps);
    s.get("prior_nu", cfg.fit.prior_nu);
    s.get("sigma_y2", cfg.fit.sigma_y2);
    s.get("seed", cfg.fit.seed);
    s.get("likelihood_scale", scale);
    s.get("learn_nu", cfg.fit.learn_nu);
    s.get("early_stop_patience", patience);
    s.get("early_stop_rel", cfg.fit.early_stop_rel);
    s.get("mc_rounds", mc_rounds);
    s.get("resample_frozen", cfg.fit.resample_frozen);
  });
  long long repeats = static_cast<long long>(cfg.split.repeats);
  root.sub("split", [&](Section& s) {
    s.get("train_fraction", cfg.split.train_fraction);
    s.get("repeats", repeats);
    s.get("base_seed", cfg.split.base_seed);
  });
  root.get("mode", mode);
  root.get("output", output);
  root.finish();

  auto count = [&](long long v, const char* field, std::size_t& out, long long min) {
    if (v < min) {
      problems.push_back(std::string(field) + " must be >= " + std::to_string(min) + ", got " +
                         std::to_string(v));
    } else {
      out = static_cast<std::size_t>(v);
    }
  };
  count(layers, "structure.L", cfg.layers, 1);
  count(eta, "structure.eta", cfg.eta, 1);
  count(bank, "structure.S", cfg.fit.bank_size, 1);
  count(k_train, "structure.K_train", cfg.fit.k_train, 1);
  count(k_eval, "structure.K_eval", cfg.fit.k_eval, 1);
  count(epochs, "fit.epochs", cfg.fit.epochs, 0);
  count(batch, "fit.batch_size", cfg.fit.batch_size, 1);
  count(patience, "fit.early_stop_patience", cfg.fit.early_stop_patience, 0);
  count(mc_rounds, "fit.mc_rounds", cfg.fit.mc_rounds, 1);
  count(repeats, "split.repeats", cfg.split.repeats, 1);
  if (scale == "full-dataset") {
    cfg.fit.likelihood_scale = LikelihoodScale::kFullDataset;
  } else if (scale == "batch-mean") {
    cfg.fit.likelihood_scale = LikelihoodScale::kBatchMean;
  } else {
    problems.push_back("fit.likelihood_scale must be full-dataset or batch-mean");
  }
  try {
    cfg.mode = parse_mode(mode);
  } catch (const ConfigError& e) {
    problems.push_back(std::string("mode: ") + e.what());
  }
  cfg.dataset_path = resolve(path, base_dir);
  cfg.schema_path = resolve(schema, base_dir);
  cfg.output = resolve(output, base_dir);
  if (cfg.name.empty()) cfg.name = cfg.dataset_path.stem().string();

  if (problems.empty()) problems = cfg.problems();
  if (!problems.empty()) throw ConfigError("invalid configuration:" + join(problems));
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  const FitConfig& f = cfg.fit;
  return {
      {"version", 1},
      {"dataset", {{"name", cfg.name}, {"path", cfg.dataset_path.string()},
                   {"schema", cfg.schema_path.string()}}},
      {"structure", {{"L", cfg.layers}, {"eta", cfg.eta}, {"S", f.bank_size},
                     {"K_train", f.k_train}, {"K_eval", f.k_eval}}},
      {"fit",
       {{"epochs", f.epochs},
        {"batch_size", f.batch_size},
        {"learning_rate", f.learning_rate},
        {"adam_beta1", f.adam_beta1},
        {"adam_beta2", f.adam_beta2},
        {"adam_eps", f.adam_eps},
        {"prior_nu", f.prior_nu},
        {"sigma_y2", f.sigma_y2},
        {"seed", f.seed},
        {"likelihood_scale",
         f.likelihood_scale == LikelihoodScale::kFullDataset ? "full-dataset" : "batch-mean"},
        {"learn_nu", f.learn_nu},
        {"early_stop_patience", f.early_stop_patience},
        {"early_stop_rel", f.early_stop_rel},
        {"mc_rounds", f.mc_rounds},
        {"resample_frozen", f.resample_frozen}}},
      {"split", {{"train_fraction", cfg.split.train_fraction},
                 {"repeats", cfg.split.repeats},
                 {"base_seed", cfg.split.base_seed}}},
      {"mode", mode_name(cfg.mode)},
      {"output", cfg.output.string()},
  };
}

std::uint64_t repeat_seed(std::uint64_t base, std::size_t repeat) {
  return RngStream(base).child(repeat).next_u64();
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.fit.seed = *o.seed;
    cfg.split.base_seed = *o.seed;
  }
  if (o.out) cfg.output = *o.out;
  if (o.mode) cfg.mode = *o.mode;
  if (o.repeats) cfg.split.repeats = *o.repeats;
  cfg.validate();
}

}  // namespace dtbks::cli
