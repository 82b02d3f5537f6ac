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

#include "dtbks/training.hpp"

#include <chrono>
#include <numeric>
#include <string>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/special.hpp"
#include "dtbks/tdivergence.hpp"

namespace dtbks {

namespace {

// Child-stream ids of the fit seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kResampleStream = 4;

Tensor prior_bank(RngStream& rng, std::size_t s, std::size_t d, double nu) {
  Tensor bank({s, d});
  for (double& v : bank.data()) v = rng.student_t(nu);
  return bank;
}

Tensor map_vec(const std::vector<double>& in, double (*f)(double)) {
  Tensor out({in.size()});
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

double softplus_inv_sqrt(double s2) { return softplus_inverse(std::sqrt(s2)); }
double square_softplus(double r) { return softplus(r) * softplus(r); }

double nu_from_raw(double rho) { return softplus(rho) + kNuFloor; }

double raw_from_nu(double nu) {
  if (!(nu > kNuFloor)) {
    throw DomainError("nu = " + std::to_string(nu) + " is not above the floor " +
                      std::to_string(kNuFloor));
  }
  return softplus_inverse(nu - kNuFloor);
}

}  // namespace

void FitConfig::validate() const {
  auto need = [](bool ok, const char* field) {
    if (!ok) throw ConfigError(std::string("invalid ") + field);
  };
  need(batch_size >= 1, "batch_size");
  need(learning_rate > 0.0, "learning_rate");
  need(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1");
  need(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2");
  need(adam_eps > 0.0, "adam_eps");
  need(bank_size >= 1, "S");
  need(k_train >= 1, "K_train");
  need(k_eval >= 1, "K_eval");
  need(mc_rounds >= 1, "mc_rounds");
  need(prior_nu > kNuFloor, "prior_nu");
  need(sigma_y2 > 0.0, "sigma_y2");
  need(early_stop_rel >= 0.0, "early_stop_rel");
}

std::size_t Structure::output_dim() const {
  if (const auto* c = std::get_if<Classification>(&task)) return c->num_classes;
  return 1;
}

Structure Structure::for_dataset(const Dataset& ds, std::size_t num_layers, std::size_t eta,
                                 double sigma_y2, bool rks_prior) {
  Structure s;
  s.input_dim = ds.num_features();
  s.num_layers = num_layers;
  s.eta = eta;
  s.rks_prior = rks_prior;
  if (ds.task == TaskKind::kClassification) {
    s.task = Classification{ds.num_classes()};
  } else {
    if (ds.targets.cols() != 1) throw UsageError("only scalar regression targets are supported");
    s.task = Regression{sigma_y2};
  }
  return s;
}

Network init_from_prior(const Structure& structure, const FitConfig& cfg) {
  if (structure.num_layers < 1) throw ConfigError("invalid L: must be >= 1");
  if (structure.eta < 1) throw ConfigError("invalid eta: must be >= 1");
  if (structure.input_dim < 1) throw UsageError("input dimension must be >= 1");
  RngStream rng = RngStream(cfg.seed).child(kInitStream);
  Network net{{}, structure.task, cfg.prior_nu};
  std::size_t d_in = structure.input_dim;
  for (std::size_t l = 0; l < structure.num_layers; ++l) {
    const bool last = l + 1 == structure.num_layers;
    const std::size_t eta = last ? structure.output_dim() : structure.eta;
    const std::size_t s = cfg.bank_size;
    LayerParams p{DiagStudentT::standard(d_in, cfg.prior_nu),
                  DiagStudentT::standard(eta * s, cfg.prior_nu), d_in, eta, s, std::nullopt};
    if (structure.rks_prior) p.frozen_omega = prior_bank(rng, s, d_in, cfg.prior_nu);
    net.layers.push_back(std::move(p));
    d_in = eta;
  }
  net.validate();
  return net;
}

RawParams to_raw(const Network& net) {
  RawParams raw;
  for (const LayerParams& p : net.layers) {
    RawLayer r;
    r.mu_omega = Tensor::vector(p.q_omega.mu());
    r.rho_omega = map_vec(p.q_omega.sigma2(), softplus_inv_sqrt);
    r.rho_nu_omega = Tensor::scalar(raw_from_nu(p.q_omega.nu()));
    r.mu_w = Tensor::vector(p.q_w.mu());
    r.rho_w = map_vec(p.q_w.sigma2(), softplus_inv_sqrt);
    r.rho_nu_w = Tensor::scalar(raw_from_nu(p.q_w.nu()));
    raw.layers.push_back(std::move(r));
  }
  return raw;
}

Network from_raw(const RawParams& raw, const Network& skeleton, bool learn_nu) {
  if (raw.layers.size() != skeleton.layers.size()) throw UsageError("layer count mismatch");
  Network net = skeleton;
  for (std::size_t l = 0; l < raw.layers.size(); ++l) {
    const RawLayer& r = raw.layers[l];
    LayerParams& p = net.layers[l];
    const double nu_o = learn_nu ? nu_from_raw(r.rho_nu_omega.item()) : skeleton.prior_nu;
    const double nu_w = learn_nu ? nu_from_raw(r.rho_nu_w.item()) : skeleton.prior_nu;
    std::vector<double> s2o(r.rho_omega.size()), s2w(r.rho_w.size());
    for (std::size_t i = 0; i < s2o.size(); ++i) s2o[i] = square_softplus(r.rho_omega[i]);
    for (std::size_t i = 0; i < s2w.size(); ++i) s2w[i] = square_softplus(r.rho_w[i]);
    p.q_omega = DiagStudentT(r.mu_omega.storage(), std::move(s2o), nu_o);
    p.q_w = DiagStudentT(r.mu_w.storage(), std::move(s2w), nu_w);
  }
  return net;
}

std::vector<ParamGroup> trainable_groups(RawParams& raw, const Network& skeleton, bool learn_nu) {
  std::vector<ParamGroup> groups;
  for (std::size_t l = 0; l < raw.layers.size(); ++l) {
    RawLayer& r = raw.layers[l];
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    if (!skeleton.layers[l].frozen_omega) {
      groups.push_back({prefix + "mu_omega", &r.mu_omega});
      groups.push_back({prefix + "rho_omega", &r.rho_omega});
      if (learn_nu) groups.push_back({prefix + "rho_nu_omega", &r.rho_nu_omega});
    }
    groups.push_back({prefix + "mu_w", &r.mu_w});
    groups.push_back({prefix + "rho_w", &r.rho_w});
    if (learn_nu) groups.push_back({prefix + "rho_nu_w", &r.rho_nu_w});
  }
  return groups;
}

void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, AdamState& state,
               const FitConfig& cfg) {
  if (params.size() != grads.size()) throw UsageError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros_like(*p));
      state.v.push_back(Tensor::zeros_like(*p));
    }
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: state shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
      throw UsageError("adam_step: shape mismatch in group " + std::to_string(k));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& m = state.m[k][i];
      double& v = state.v[k][i];
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g[i];
      v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      p[i] -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
    }
  }
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset sub = ds.subset(rows);
  return {std::move(sub.features), std::move(sub.targets), std::move(sub.labels)};
}

Objective objective(Graph& g, RawParams& raw, const Network& skeleton, const Batch& batch,
                    const std::vector<LayerNoise>& noise, const FitConfig& cfg,
                    std::size_t dataset_size) {
  const std::size_t b = batch.x.rows();
  if (b == 0) throw UsageError("objective: empty batch");
  Objective out;
  out.groups = trainable_groups(raw, skeleton, cfg.learn_nu);
  for (const ParamGroup& grp : out.groups) out.leaves.push_back(g.leaf(*grp.value, grp.name));
  auto leaf_of = [&](const Tensor* t) -> Var {
    for (std::size_t i = 0; i < out.groups.size(); ++i) {
      if (out.groups[i].value == t) return out.leaves[i];
    }
    return g.leaf(*t);
  };

  std::vector<LayerVars> vars;
  Var divergence = g.scalar(0.0, "divergence");
  for (std::size_t l = 0; l < raw.layers.size(); ++l) {
    RawLayer& r = raw.layers[l];
    auto nu_var = [&](const Tensor* rho) {
      return cfg.learn_nu ? g.softplus(leaf_of(rho)) + kNuFloor : g.scalar(skeleton.prior_nu);
    };
    LayerVars v;
    v.mu_w = leaf_of(&r.mu_w);
    v.sigma2_w = g.square(g.softplus(leaf_of(&r.rho_w)));
    v.nu_w = nu_var(&r.rho_nu_w);
    divergence = divergence + dt_closed(g, v.mu_w, v.sigma2_w, v.nu_w, skeleton.prior_nu);
    if (!skeleton.layers[l].frozen_omega) {
      v.mu_omega = leaf_of(&r.mu_omega);
      v.sigma2_omega = g.square(g.softplus(leaf_of(&r.rho_omega)));
      v.nu_omega = nu_var(&r.rho_nu_omega);
      divergence = divergence +
                   dt_closed(g, v.mu_omega, v.sigma2_omega, v.nu_omega, skeleton.prior_nu);
    }
    vars.push_back(v);
  }

  Var x = g.leaf(batch.x, "x");
  Var output = forward_train(g, x, skeleton, vars, noise);
  Var ll = skeleton.is_classification()
               ? mean_log_lik_classification(g, output, batch.labels)
               : mean_log_lik_regression(g, output, batch.y,
                                         std::get<Regression>(skeleton.task).sigma_y2);
  const double scale = cfg.likelihood_scale == LikelihoodScale::kFullDataset
                           ? static_cast<double>(dataset_size)
                           : static_cast<double>(b);
  out.divergence = divergence;
  out.mean_log_lik = ll;
  out.loss = divergence - scale * ll;
  if (!std::isfinite(divergence.value().item())) {
    throw NumericalError("objective: divergence term is not finite");
  }
  if (!std::isfinite(ll.value().item())) {
    throw NumericalError("objective: log-likelihood term is not finite");
  }
  return out;
}

FitResult fit(const Dataset& train, const FitConfig& cfg, const Structure& structure) {
  cfg.validate();
  train.validate();
  const auto start = std::chrono::steady_clock::now();
  Network skeleton = init_from_prior(structure, cfg);
  if (train.num_features() != skeleton.input_dim()) {
    throw UsageError("dataset has " + std::to_string(train.num_features()) +
                     " features, structure expects " + std::to_string(skeleton.input_dim()));
  }
  RawParams raw = to_raw(skeleton);
  AdamState adam;
  TrainReport report;
  const RngStream root(cfg.seed);
  RngStream shuffle_rng = root.child(kShuffleStream);
  RngStream noise_rng = root.child(kNoiseStream);
  RngStream resample_rng = root.child(kResampleStream);

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t consecutive_bad = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const Batch batch = make_batch(train, std::span(order).subspan(begin, end - begin));
      if (cfg.resample_frozen) {
        for (LayerParams& p : skeleton.layers) {
          if (p.frozen_omega) {
            p.frozen_omega = prior_bank(resample_rng, p.bank_size, p.d_in, cfg.prior_nu);
          }
        }
      }
      const Network current = from_raw(raw, skeleton, cfg.learn_nu);
      const auto noise = draw_training_noise(noise_rng, current, cfg.k_train);
      ++report.iterations;
      std::string failure;
      try {
        Graph g;
        Objective obj = objective(g, raw, skeleton, batch, noise, cfg, n);
        const double loss = obj.loss.value().item();
        g.backward(obj.loss);
        std::vector<Tensor*> params;
        std::vector<Tensor> grads;
        for (std::size_t k = 0; k < obj.groups.size(); ++k) {
          params.push_back(obj.groups[k].value);
          grads.push_back(g.adjoint(obj.leaves[k]));
        }
        adam_step(params, grads, adam, cfg);
        report.objective.push_back(loss);
        report.divergence.push_back(obj.divergence.value().item());
        report.log_lik.push_back(obj.mean_log_lik.value().item());
        epoch_sum += loss;
        ++epoch_steps;
        consecutive_bad = 0;
      } catch (const NumericalError& e) {
        failure = e.what();
      }
      if (!failure.empty()) {
        report.objective.push_back(std::nan(""));
        report.divergence.push_back(std::nan(""));
        report.log_lik.push_back(std::nan(""));
        ++report.skipped_steps;
        if (++consecutive_bad >= 2) {
          throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) +
                               ", iteration " + std::to_string(report.iterations) +
                               " (two consecutive non-finite losses): " + failure);
        }
      }
    }
    report.epoch_objective.push_back(epoch_steps ? epoch_sum / static_cast<double>(epoch_steps)
                                                 : std::nan(""));
    report.epochs_run = epoch + 1;
    // Compares the mean of the last `patience` epochs with the window before
    // it; single-epoch values are too noisy under heavy-tailed sampling.
    const std::size_t p = cfg.early_stop_patience;
    const auto& eo = report.epoch_objective;
    if (p > 0 && eo.size() >= 2 * p) {
      const auto window_mean = [&](std::size_t from) {
        double s = 0.0;
        for (std::size_t i = from; i < from + p; ++i) s += eo[i];
        return s / static_cast<double>(p);
      };
      const double previous = window_mean(eo.size() - 2 * p);
      const double current = window_mean(eo.size() - p);
      if (previous - current < cfg.early_stop_rel * std::abs(previous)) {
        report.early_stopped = true;
        break;
      }
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {from_raw(raw, skeleton, cfg.learn_nu), std::move(report)};
}

}  // namespace dtbks
