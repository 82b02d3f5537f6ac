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
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "dtbks/numerics/graph.hpp"
#include "dtbks/numerics/rng.hpp"
#include "dtbks/numerics/tensor.hpp"
#include "dtbks/tdist.hpp"

namespace dtbks {

// Posterior over one layer: q_omega is shared by all S bank members, q_w is
// over vec(W) with W an eta x S matrix stored row-major.
struct LayerParams {
  DiagStudentT q_omega;
  DiagStudentT q_w;
  std::size_t d_in = 0;
  std::size_t eta = 0;
  std::size_t bank_size = 0;
  // S x d_in bank drawn once from the prior and never updated (RKS ablation).
  std::optional<Tensor> frozen_omega;

  void validate() const;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct Regression {
  double sigma_y2 = 0.0;
  friend bool operator==(const Regression&, const Regression&) = default;
};

struct Classification {
  std::size_t num_classes = 0;
  friend bool operator==(const Classification&, const Classification&) = default;
};

using Task = std::variant<Regression, Classification>;

struct Network {
  std::vector<LayerParams> layers;
  Task task;
  double prior_nu = 2.1;

  std::size_t input_dim() const { return layers.front().d_in; }
  std::size_t output_dim() const { return layers.back().eta; }
  bool is_classification() const { return std::holds_alternative<Classification>(task); }
  // Throws UsageError if layer dimensions do not chain or the head does not
  // match the task.
  void validate() const;
  friend bool operator==(const Network&, const Network&) = default;
};

struct SampledLayer {
  Tensor omega_bank;             // S x d_in
  std::vector<Tensor> w_draws;   // K matrices, eta x S
};

// Parameter-free noise for one layer of a training pass.
struct LayerNoise {
  Tensor omega_eps;  // S x d_in, unit-scale t(nu_omega + 2); unused when frozen
  Tensor w_eps;      // K x (eta * S), unit-scale t(nu_w + 2)
};

// xi(x; omega) = cos(omega.x)/2 + sin(omega.x)/2.
double feature(std::span<const double> x, std::span<const double> omega);

// (1/K) sum_j W_j phi(h), phi_s = feature(h, omega_s).
std::vector<double> layer_forward(std::span<const double> h, const SampledLayer& sampled);

// Draws training noise for every layer: S omega rows and k_draws W rows.
std::vector<LayerNoise> draw_training_noise(RngStream& rng, const Network& net,
                                            std::size_t k_draws);

// Escort-sampled forward pass for one input. Returns the final-layer output
// (regression mean or logits) and the sampled layers.
std::pair<std::vector<double>, std::vector<SampledLayer>> forward_train(
    std::span<const double> x, const Network& net, const std::vector<LayerNoise>& noise);

// Posterior parameters of one layer as tape nodes: sigma2 vectors and nu
// scalars, already constrained to be positive.
struct LayerVars {
  Var mu_omega, sigma2_omega, nu_omega;
  Var mu_w, sigma2_w, nu_w;
};

// Batched, differentiable forward_train. x is B x d_in; returns B x eta_L.
// Frozen banks enter as constants and the omega vars of that layer are unused.
Var forward_train(Graph& g, Var x, const Network& net, const std::vector<LayerVars>& vars,
                  const std::vector<LayerNoise>& noise);

struct Prediction {
  std::vector<double> output;         // regression mean, or class probabilities
  std::optional<std::size_t> label;  // argmax, classification only
};

// Posterior-predictive estimate: mc_rounds passes with omega and W drawn from
// the posteriors (mu + sigma * eps, eps ~ t(nu)), k_draws W matrices per layer
// and round. Regression averages outputs, classification averages softmax.
Prediction forward_predict(std::span<const double> x, const Network& net, RngStream& rng,
                           std::size_t mc_rounds, std::size_t k_draws);

// Batched forward_predict over the rows of x. Each round's draws are shared by
// every row, so rows are not independent given the stream. Returns one
// Prediction per row.
std::vector<Prediction> forward_predict_batch(const Tensor& x, const Network& net, RngStream& rng,
                                              std::size_t mc_rounds, std::size_t k_draws);

double log_lik_regression(std::span<const double> y, std::span<const double> mean,
                          double sigma_y2);
double log_lik_classification(std::size_t label, std::span<const double> logits);

// Batch mean of the log-likelihood on the tape. y is B x m for regression.
Var mean_log_lik_regression(Graph& g, Var output, const Tensor& y, double sigma_y2);
Var mean_log_lik_classification(Graph& g, Var logits, std::span<const std::size_t> labels);

}  // namespace dtbks
