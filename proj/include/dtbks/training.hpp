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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dtbks/data.hpp"
#include "dtbks/model.hpp"
#include "dtbks/numerics/graph.hpp"
#include "dtbks/numerics/rng.hpp"

namespace dtbks {

enum class LikelihoodScale { kFullDataset, kBatchMean };

struct FitConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t bank_size = 100;
  std::size_t k_train = 10;
  std::size_t k_eval = 100;
  std::size_t mc_rounds = 10;
  double prior_nu = 2.1;
  double sigma_y2 = std::exp(-2.0);
  std::uint64_t seed = 0;
  LikelihoodScale likelihood_scale = LikelihoodScale::kFullDataset;
  // When false, nu of every posterior stays tied to prior_nu.
  bool learn_nu = false;
  // Stop once the mean objective of the last early_stop_patience epochs is
  // less than early_stop_rel (relative) below the mean of the window before.
  // Patience 0 disables early stopping.
  std::size_t early_stop_patience = 20;
  double early_stop_rel = 1e-4;
  // RKS ablation only: redraw the frozen bank from the prior every iteration.
  bool resample_frozen = false;

  void validate() const;
};

// Layer dimensions and head; the input to init_from_prior.
struct Structure {
  std::size_t input_dim = 0;
  std::size_t num_layers = 1;
  std::size_t eta = 1;  // width of hidden layers
  Task task;
  bool rks_prior = false;

  std::size_t output_dim() const;
  static Structure for_dataset(const Dataset& ds, std::size_t num_layers, std::size_t eta,
                               double sigma_y2, bool rks_prior);
};

// Unconstrained parameters of one layer. sigma = softplus(rho),
// nu = softplus(rho_nu) + kNuFloor.
struct RawLayer {
  Tensor mu_omega, rho_omega, rho_nu_omega;
  Tensor mu_w, rho_w, rho_nu_w;
};

inline constexpr double kNuFloor = 0.1;

struct RawParams {
  std::vector<RawLayer> layers;
};

RawParams to_raw(const Network& net);
// Rebuilds the constrained network; skeleton supplies dims, task and frozen
// banks. With learn_nu false the posteriors take the skeleton's prior_nu.
Network from_raw(const RawParams& raw, const Network& skeleton, bool learn_nu);

// Parameter groups in a fixed order, with names such as "layer1.mu_omega".
struct ParamGroup {
  std::string name;
  Tensor* value;
};
std::vector<ParamGroup> trainable_groups(RawParams& raw, const Network& skeleton, bool learn_nu);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update applied in place. State is lazily shaped on the
// first call.
void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, AdamState& state,
               const FitConfig& cfg);

Network init_from_prior(const Structure& structure, const FitConfig& cfg);

struct Batch {
  Tensor x;                         // B x delta
  Tensor y;                         // B x m, regression
  std::vector<std::size_t> labels;  // B, classification
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows);

struct Objective {
  Var loss;
  Var divergence;
  Var mean_log_lik;
  // Leaves of the unconstrained parameters, aligned with trainable_groups.
  std::vector<ParamGroup> groups;
  std::vector<Var> leaves;
};

// loss = sum_l [D(q_omega) + D(q_w)] - Lambda * mean log p(y | x), with
// Lambda = dataset_size under kFullDataset and the batch size otherwise.
// Throws NumericalError naming the offending term when it is not finite.
Objective objective(Graph& g, RawParams& raw, const Network& skeleton, const Batch& batch,
                    const std::vector<LayerNoise>& noise, const FitConfig& cfg,
                    std::size_t dataset_size);

struct TrainReport {
  std::vector<double> objective;
  std::vector<double> divergence;
  std::vector<double> log_lik;  // batch-mean expected log-likelihood
  std::vector<double> epoch_objective;
  std::size_t iterations = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t skipped_steps = 0;
  double wall_seconds = 0.0;
};

struct FitResult {
  Network network;
  TrainReport report;
};

// Runs epochs x ceil(N/B) Adam steps on standardized data. Aborts with
// NumericalError after two consecutive non-finite losses.
FitResult fit(const Dataset& train, const FitConfig& cfg, const Structure& structure);

}  // namespace dtbks
