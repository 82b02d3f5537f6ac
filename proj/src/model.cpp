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

#include "dtbks/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dtbks/errors.hpp"

namespace dtbks {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

// Applies one layer to a B x d_in batch with an averaged eta x S mixing matrix.
Tensor apply_layer(const Tensor& h, const Tensor& omega, const Tensor& w_bar) {
  const std::size_t b = h.rows(), d = h.cols(), s = omega.rows(), eta = w_bar.rows();
  std::vector<double> phi(s);
  Tensor out({b, eta});
  for (std::size_t r = 0; r < b; ++r) {
    const auto x = h.row(r);
    for (std::size_t j = 0; j < s; ++j) {
      const auto w = omega.row(j);
      double a = 0.0;
      for (std::size_t k = 0; k < d; ++k) a += w[k] * x[k];
      phi[j] = 0.5 * (std::cos(a) + std::sin(a));
    }
    for (std::size_t e = 0; e < eta; ++e) {
      const auto wr = w_bar.row(e);
      double acc = 0.0;
      for (std::size_t j = 0; j < s; ++j) acc += wr[j] * phi[j];
      out.at(r, e) = acc;
    }
  }
  return out;
}

// Posterior draw mu + sigma * eps with eps ~ t(nu), one row per draw.
Tensor posterior_draws(RngStream& rng, const DiagStudentT& q, std::size_t n) {
  Tensor out({n, q.dim()});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < q.dim(); ++i) {
      out.at(r, i) = q.mu()[i] + std::sqrt(q.sigma2()[i]) * rng.student_t(q.nu());
    }
  }
  return out;
}

void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - m));
  for (double& v : z) v /= s;
}

}  // namespace

void LayerParams::validate() const {
  require(d_in > 0 && eta > 0 && bank_size > 0, "layer dimensions must be positive");
  require(q_omega.dim() == d_in, "q_omega dimension " + std::to_string(q_omega.dim()) +
                                     " != d_in " + std::to_string(d_in));
  require(q_w.dim() == eta * bank_size, "q_w dimension " + std::to_string(q_w.dim()) +
                                            " != eta*S " + std::to_string(eta * bank_size));
  if (frozen_omega) {
    require(frozen_omega->rank() == 2 && frozen_omega->rows() == bank_size &&
                frozen_omega->cols() == d_in,
            "frozen bank must be S x d_in, got " + shape_string(frozen_omega->shape()));
  }
}

void Network::validate() const {
  require(!layers.empty(), "network needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l > 0) {
      require(layers[l].d_in == layers[l - 1].eta,
              "layer " + std::to_string(l + 1) + " input dimension does not match layer " +
                  std::to_string(l) + " output");
    }
  }
  require(prior_nu > 0.0, "prior_nu must be positive");
  if (const auto* c = std::get_if<Classification>(&task)) {
    require(c->num_classes >= 2, "classification needs at least two classes");
    require(output_dim() == c->num_classes, "final layer width must equal num_classes");
  } else {
    require(std::get<Regression>(task).sigma_y2 > 0.0, "sigma_y2 must be positive");
  }
}

double feature(std::span<const double> x, std::span<const double> omega) {
  require(x.size() == omega.size(), "feature: x has dimension " + std::to_string(x.size()) +
                                        ", omega has " + std::to_string(omega.size()));
  double a = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) a += x[i] * omega[i];
  return 0.5 * std::cos(a) + 0.5 * std::sin(a);
}

std::vector<double> layer_forward(std::span<const double> h, const SampledLayer& sampled) {
  require(!sampled.w_draws.empty(), "layer_forward: need at least one W draw");
  const std::size_t s = sampled.omega_bank.rows();
  require(sampled.omega_bank.rank() == 2 && sampled.omega_bank.cols() == h.size(),
          "layer_forward: bank is " + shape_string(sampled.omega_bank.shape()) + ", input has " +
              std::to_string(h.size()) + " entries");
  std::vector<double> phi(s);
  for (std::size_t j = 0; j < s; ++j) phi[j] = feature(h, sampled.omega_bank.row(j));
  const std::size_t eta = sampled.w_draws.front().rows();
  std::vector<double> out(eta, 0.0);
  for (const Tensor& w : sampled.w_draws) {
    require(w.rank() == 2 && w.rows() == eta && w.cols() == s,
            "layer_forward: W draw has shape " + shape_string(w.shape()));
    for (std::size_t e = 0; e < eta; ++e) {
      double acc = 0.0;
      for (std::size_t j = 0; j < s; ++j) acc += w.at(e, j) * phi[j];
      out[e] += acc;
    }
  }
  for (double& v : out) v /= static_cast<double>(sampled.w_draws.size());
  return out;
}

std::vector<LayerNoise> draw_training_noise(RngStream& rng, const Network& net,
                                            std::size_t k_draws) {
  require(k_draws >= 1, "need at least one W draw");
  std::vector<LayerNoise> noise;
  noise.reserve(net.layers.size());
  for (const LayerParams& layer : net.layers) {
    LayerNoise n;
    if (!layer.frozen_omega) n.omega_eps = draw_noise(rng, layer.q_omega, layer.bank_size);
    n.w_eps = draw_noise(rng, layer.q_w, k_draws);
    noise.push_back(std::move(n));
  }
  return noise;
}

namespace {

void check_noise(const Network& net, const std::vector<LayerNoise>& noise) {
  require(noise.size() == net.layers.size(), "noise has " + std::to_string(noise.size()) +
                                                 " layers, network has " +
                                                 std::to_string(net.layers.size()));
  for (std::size_t l = 0; l < noise.size(); ++l) {
    const LayerParams& p = net.layers[l];
    if (!p.frozen_omega) {
      require(noise[l].omega_eps.rank() == 2 && noise[l].omega_eps.rows() == p.bank_size &&
                  noise[l].omega_eps.cols() == p.d_in,
              "layer " + std::to_string(l + 1) + " omega noise has shape " +
                  shape_string(noise[l].omega_eps.shape()));
    }
    require(noise[l].w_eps.rank() == 2 && noise[l].w_eps.rows() >= 1 &&
                noise[l].w_eps.cols() == p.eta * p.bank_size,
            "layer " + std::to_string(l + 1) + " W noise has shape " +
                shape_string(noise[l].w_eps.shape()));
  }
}

}  // namespace

std::pair<std::vector<double>, std::vector<SampledLayer>> forward_train(
    std::span<const double> x, const Network& net, const std::vector<LayerNoise>& noise) {
  check_noise(net, noise);
  std::vector<double> h(x.begin(), x.end());
  std::vector<SampledLayer> sampled;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    SampledLayer s;
    if (p.frozen_omega) {
      s.omega_bank = *p.frozen_omega;
    } else {
      s.omega_bank = Tensor({p.bank_size, p.d_in});
      for (std::size_t j = 0; j < p.bank_size; ++j) {
        const auto w = reparam_sample(p.q_omega, noise[l].omega_eps.row(j));
        std::copy(w.begin(), w.end(), s.omega_bank.row(j).begin());
      }
    }
    for (std::size_t k = 0; k < noise[l].w_eps.rows(); ++k) {
      s.w_draws.emplace_back(Tensor::Shape{p.eta, p.bank_size},
                             reparam_sample(p.q_w, noise[l].w_eps.row(k)));
    }
    h = layer_forward(h, s);
    sampled.push_back(std::move(s));
  }
  return {std::move(h), std::move(sampled)};
}

Var forward_train(Graph& g, Var x, const Network& net, const std::vector<LayerVars>& vars,
                  const std::vector<LayerNoise>& noise) {
  check_noise(net, noise);
  require(vars.size() == net.layers.size(), "one LayerVars per layer required");
  Var h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    const LayerVars& v = vars[l];
    Var omega;
    if (p.frozen_omega) {
      omega = g.leaf(*p.frozen_omega, "frozen_omega");
    } else {
      Var scale = g.sqrt(v.nu_omega / (v.nu_omega + 2.0)) * g.sqrt(v.sigma2_omega);
      omega = v.mu_omega + scale * g.leaf(noise[l].omega_eps, "omega_eps");
    }
    Var a = g.matmul(h, g.transpose(omega));
    Var phi = 0.5 * (g.cos(a) + g.sin(a));
    const std::size_t k = noise[l].w_eps.rows();
    Var scale_w = g.sqrt(v.nu_w / (v.nu_w + 2.0)) * g.sqrt(v.sigma2_w);
    Var draws = v.mu_w + scale_w * g.leaf(noise[l].w_eps, "w_eps");
    Var averager = g.leaf(Tensor({1, k}, 1.0 / static_cast<double>(k)));
    Var w_bar = g.reshape(g.matmul(averager, draws), {p.eta, p.bank_size});
    h = g.matmul(phi, g.transpose(w_bar));
  }
  return h;
}

std::vector<Prediction> forward_predict_batch(const Tensor& x, const Network& net, RngStream& rng,
                                              std::size_t mc_rounds, std::size_t k_draws) {
  require(mc_rounds >= 1, "mc_rounds must be >= 1");
  require(k_draws >= 1, "k_draws must be >= 1");
  require(x.rank() == 2 && x.cols() == net.input_dim(),
          "forward_predict: input has shape " + shape_string(x.shape()) + ", network expects " +
              std::to_string(net.input_dim()) + " columns");
  const bool classify = net.is_classification();
  const std::size_t out_dim = net.output_dim();
  Tensor acc({x.rows(), out_dim});
  for (std::size_t round = 0; round < mc_rounds; ++round) {
    Tensor h = x;
    for (const LayerParams& p : net.layers) {
      const Tensor omega = p.frozen_omega ? *p.frozen_omega
                                          : posterior_draws(rng, p.q_omega, p.bank_size);
      const Tensor w = posterior_draws(rng, p.q_w, k_draws);
      Tensor w_bar({p.eta, p.bank_size});
      for (std::size_t r = 0; r < k_draws; ++r) {
        for (std::size_t i = 0; i < w_bar.size(); ++i) w_bar[i] += w.at(r, i);
      }
      for (double& v : w_bar.data()) v /= static_cast<double>(k_draws);
      h = apply_layer(h, omega, w_bar);
    }
    if (classify) {
      for (std::size_t r = 0; r < h.rows(); ++r) softmax_inplace(h.row(r));
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += h[i];
  }
  std::vector<Prediction> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = acc.row(r);
    out[r].output.assign(row.begin(), row.end());
    for (double& v : out[r].output) v /= static_cast<double>(mc_rounds);
    if (classify) {
      out[r].label = static_cast<std::size_t>(
          std::max_element(out[r].output.begin(), out[r].output.end()) - out[r].output.begin());
    }
  }
  return out;
}

Prediction forward_predict(std::span<const double> x, const Network& net, RngStream& rng,
                           std::size_t mc_rounds, std::size_t k_draws) {
  Tensor batch({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  return forward_predict_batch(batch, net, rng, mc_rounds, k_draws).front();
}

double log_lik_regression(std::span<const double> y, std::span<const double> mean,
                          double sigma_y2) {
  if (!(sigma_y2 > 0.0)) throw DomainError("sigma_y2 must be > 0");
  require(y.size() == mean.size(), "log_lik_regression: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sq += (y[i] - mean[i]) * (y[i] - mean[i]);
  const double dim = static_cast<double>(y.size());
  return -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma_y2) - sq / (2.0 * sigma_y2);
}

double log_lik_classification(std::size_t label, std::span<const double> logits) {
  require(label < logits.size(), "label " + std::to_string(label) + " out of range for " +
                                     std::to_string(logits.size()) + " classes");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return logits[label] - m - std::log(s);
}

Var mean_log_lik_regression(Graph& g, Var output, const Tensor& y, double sigma_y2) {
  if (!(sigma_y2 > 0.0)) throw DomainError("sigma_y2 must be > 0");
  require(output.value().shape() == y.shape(), "regression targets have shape " +
                                                   shape_string(y.shape()) + ", output has " +
                                                   shape_string(output.value().shape()));
  const double b = static_cast<double>(y.rows());
  const double dim = static_cast<double>(y.cols());
  Var sq = g.sum(g.square(output - g.leaf(y, "y")));
  return sq * (-1.0 / (2.0 * sigma_y2 * b)) -
         0.5 * dim * std::log(2.0 * std::numbers::pi * sigma_y2);
}

Var mean_log_lik_classification(Graph& g, Var logits, std::span<const std::size_t> labels) {
  return g.mean(g.log_softmax_pick(logits, labels));
}

}  // namespace dtbks
