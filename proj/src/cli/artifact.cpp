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

#include "dtbks/cli.hpp"
#include "dtbks/errors.hpp"

namespace dtbks::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json dist_to_json(const DiagStudentT& d) {
  return {{"mu", d.mu()}, {"sigma2", d.sigma2()}, {"nu", d.nu()}};
}

DiagStudentT dist_from_json(const json& j) {
  return DiagStudentT(j.at("mu").get<std::vector<double>>(),
                      j.at("sigma2").get<std::vector<double>>(), j.at("nu").get<double>());
}

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.storage()}}; }

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Tensor::Shape>(), j.at("data").get<std::vector<double>>());
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IngestionError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const LayerParams& p : net.layers) {
    json l = {{"d_in", p.d_in}, {"eta", p.eta}, {"S", p.bank_size},
              {"q_omega", dist_to_json(p.q_omega)}, {"q_w", dist_to_json(p.q_w)}};
    if (p.frozen_omega) l["frozen_omega"] = tensor_to_json(*p.frozen_omega);
    layers.push_back(std::move(l));
  }
  json task;
  if (const auto* c = std::get_if<Classification>(&net.task)) {
    task = {{"kind", "classification"}, {"num_classes", c->num_classes}};
  } else {
    task = {{"kind", "regression"}, {"sigma_y2", std::get<Regression>(net.task).sigma_y2}};
  }
  return {{"prior_nu", net.prior_nu}, {"task", task}, {"layers", layers}};
}

Network network_from_json(const json& j) {
  return guarded("network", [&] {
    Network net{{}, Regression{1.0}, j.at("prior_nu").get<double>()};
    const json& task = j.at("task");
    if (task.at("kind") == "classification") {
      net.task = Classification{task.at("num_classes").get<std::size_t>()};
    } else {
      net.task = Regression{task.at("sigma_y2").get<double>()};
    }
    for (const json& l : j.at("layers")) {
      LayerParams p{dist_from_json(l.at("q_omega")), dist_from_json(l.at("q_w")),
                    l.at("d_in").get<std::size_t>(), l.at("eta").get<std::size_t>(),
                    l.at("S").get<std::size_t>(), std::nullopt};
      if (l.contains("frozen_omega")) p.frozen_omega = tensor_from_json(l.at("frozen_omega"));
      net.layers.push_back(std::move(p));
    }
    net.validate();
    return net;
  });
}

json artifact_to_json(const ModelArtifact& a) {
  const Standardizer& s = a.standardizer;
  const std::size_t columns = s.kept_columns().size() + s.dropped_columns().size();
  return {{"format", "dtbks-model"},
          {"version", kArtifactVersion},
          {"task", task_kind_name(a.task)},
          {"feature_names", a.feature_names},
          {"class_names", a.class_names},
          {"k_eval", a.k_eval},
          {"mc_rounds", a.mc_rounds},
          {"standardizer",
           {{"num_columns", columns},
            {"kept", s.kept_columns()},
            {"feature_mean", s.feature_mean()},
            {"feature_std", s.feature_std()},
            {"target_mean", s.target_mean()},
            {"target_std", s.target_std()}}},
          {"network", network_to_json(a.network)}};
}

ModelArtifact artifact_from_json(const json& j) {
  return guarded("model artifact", [&] {
    if (j.at("format") != "dtbks-model") throw IngestionError("not a model artifact");
    if (j.at("version").get<int>() != kArtifactVersion) {
      throw IngestionError("unsupported artifact version " + j.at("version").dump());
    }
    const json& s = j.at("standardizer");
    ModelArtifact a{network_from_json(j.at("network")),
                    Standardizer::from_parts(s.at("num_columns").get<std::size_t>(),
                                             s.at("kept").get<std::vector<std::size_t>>(),
                                             s.at("feature_mean").get<std::vector<double>>(),
                                             s.at("feature_std").get<std::vector<double>>(),
                                             s.at("target_mean").get<std::vector<double>>(),
                                             s.at("target_std").get<std::vector<double>>()),
                    parse_task_kind(j.at("task").get<std::string>()),
                    j.at("feature_names").get<std::vector<std::string>>(),
                    j.at("class_names").get<std::vector<std::string>>(),
                    j.at("k_eval").get<std::size_t>(),
                    j.at("mc_rounds").get<std::size_t>()};
    return a;
  });
}

json report_to_json(const TrainReport& r) {
  // NaN marks skipped steps; JSON has no NaN, so they become null.
  auto series = [](const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return out;
  };
  return {{"format", "dtbks-train-report"},
          {"version", 1},
          {"iterations", r.iterations},
          {"epochs_run", r.epochs_run},
          {"early_stopped", r.early_stopped},
          {"skipped_steps", r.skipped_steps},
          {"wall_seconds", r.wall_seconds},
          {"objective", series(r.objective)},
          {"divergence", series(r.divergence)},
          {"log_lik", series(r.log_lik)},
          {"epoch_objective", series(r.epoch_objective)}};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

}  // namespace dtbks::cli
