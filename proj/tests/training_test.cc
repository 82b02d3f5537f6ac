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
#include <numeric>

#include <gtest/gtest.h>

#include "dtbks/errors.hpp"
#include "dtbks/tdivergence.hpp"
#include "dtbks/training.hpp"
#include "test_util.hpp"

namespace dtbks {
namespace {

using testing::relative_error;

Dataset linear_dataset(std::size_t n, std::size_t d, std::uint64_t seed, double noise = 0.3) {
  RngStream rng(seed);
  Dataset ds;
  ds.features = Tensor({n, d});
  ds.targets = Tensor({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    double y = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      ds.features.at(r, c) = rng.normal();
      y += (c % 2 ? -0.8 : 0.6) * ds.features.at(r, c);
    }
    ds.targets.at(r, 0) = y + noise * rng.normal();
  }
  return ds;
}

Dataset two_class_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  RngStream rng(seed);
  Dataset ds;
  ds.task = TaskKind::kClassification;
  ds.class_names = {"a", "b", "c"};
  ds.features = Tensor({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) ds.features.at(r, c) = rng.normal();
    ds.labels.push_back(ds.features.at(r, 0) > 0.5 ? 2 : (ds.features.at(r, 1) > 0.0 ? 1 : 0));
  }
  return ds;
}

FitConfig small_config() {
  FitConfig cfg;
  cfg.bank_size = 5;
  cfg.k_train = 2;
  cfg.batch_size = 4;
  cfg.seed = 11;
  return cfg;
}

// Moves every parameter away from the prior so all gradient terms are active.
void randomize(RawParams& raw, RngStream& rng) {
  for (RawLayer& l : raw.layers) {
    for (Tensor* t : {&l.mu_omega, &l.rho_omega, &l.mu_w, &l.rho_w}) {
      for (double& v : t->data()) v += 0.3 * rng.normal();
    }
    l.rho_nu_omega[0] += 0.5 * rng.normal();
    l.rho_nu_w[0] += 0.5 * rng.normal();
  }
}

TEST(AdamTest, Examples) {
  FitConfig cfg;
  Tensor p({3}, {1.0, -2.0, 0.5});
  const Tensor before = p;
  AdamState st;
  adam_step({&p}, {Tensor({3})}, st, cfg);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1u);

  Tensor q({4}, 0.0);
  AdamState st2;
  adam_step({&q}, {Tensor({4}, 1.0)}, st2, cfg);
  for (double v : q.data()) EXPECT_NEAR(v, -cfg.learning_rate, 1e-10);

  Tensor a({2}, {0.0, 5.0});
  AdamState sa;
  for (double g : {0.3, -1.0, 2.0}) adam_step({&a}, {Tensor({2}, g)}, sa, cfg);
  EXPECT_NEAR(a[0], a[1] - 5.0, 1e-15);
  EXPECT_THROW(adam_step({&a}, {Tensor({3})}, sa, cfg), UsageError);
}

TEST(InitTest, EqualsPrior) {
  FitConfig cfg = small_config();
  Structure st{3, 2, 2, Regression{0.1}, false};
  const Network net = init_from_prior(st, cfg);
  ASSERT_EQ(net.layers.size(), 2u);
  EXPECT_EQ(net.layers[0].d_in, 3u);
  EXPECT_EQ(net.layers[0].eta, 2u);
  EXPECT_EQ(net.layers[1].eta, 1u);
  for (const LayerParams& p : net.layers) {
    EXPECT_EQ(p.q_omega, DiagStudentT::standard(p.d_in, cfg.prior_nu));
    EXPECT_EQ(dt_closed(p.q_omega, cfg.prior_nu).total, 0.0);
    EXPECT_EQ(dt_closed(p.q_w, cfg.prior_nu).total, 0.0);
  }
  EXPECT_EQ(init_from_prior(st, cfg), net);
  std::vector<LayerNoise> zero;
  for (const LayerParams& p : net.layers) {
    zero.push_back({Tensor({p.bank_size, p.d_in}), Tensor({2, p.eta * p.bank_size})});
  }
  EXPECT_EQ(forward_train(std::vector<double>{1.0, 2.0, 3.0}, net, zero).first,
            std::vector<double>{0.0});
  EXPECT_THROW(init_from_prior(Structure{3, 0, 2, Regression{0.1}, false}, cfg), ConfigError);
}

TEST(InitTest, RawRoundTrip) {
  FitConfig cfg = small_config();
  const Network net = init_from_prior(Structure{3, 2, 2, Classification{3}, false}, cfg);
  RawParams raw = to_raw(net);
  RngStream rng(1);
  randomize(raw, rng);
  const Network moved = from_raw(raw, net, true);
  const Network again = from_raw(to_raw(moved), net, true);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < moved.layers[l].q_w.dim(); ++i) {
      EXPECT_NEAR(again.layers[l].q_w.sigma2()[i], moved.layers[l].q_w.sigma2()[i], 1e-12);
    }
    EXPECT_NEAR(again.layers[l].q_omega.nu(), moved.layers[l].q_omega.nu(), 1e-12);
  }
}

// Central differences of the loss over every entry of every parameter group.
void check_gradients(const Dataset& ds, const Structure& st, FitConfig cfg) {
  cfg.learn_nu = true;
  const Network skeleton = init_from_prior(st, cfg);
  RawParams raw = to_raw(skeleton);
  RngStream rng(5);
  randomize(raw, rng);
  const auto noise = draw_training_noise(rng, from_raw(raw, skeleton, true), cfg.k_train);
  std::vector<std::size_t> rows = {0, 1, 2, 3};
  const Batch batch = make_batch(ds, rows);
  Graph g;
  Objective obj = objective(g, raw, skeleton, batch, noise, cfg, ds.size());
  g.backward(obj.loss);
  auto loss_at = [&](RawParams& r) {
    Graph g2;
    return objective(g2, r, skeleton, batch, noise, cfg, ds.size()).loss.value().item();
  };
  const std::size_t expected_groups = 6 * st.num_layers;
  ASSERT_EQ(obj.groups.size(), expected_groups);
  const double h = 1e-5;
  for (std::size_t k = 0; k < obj.groups.size(); ++k) {
    const Tensor grad = g.adjoint(obj.leaves[k]);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      RawParams plus = raw, minus = raw;
      trainable_groups(plus, skeleton, true)[k].value->data()[i] += h;
      trainable_groups(minus, skeleton, true)[k].value->data()[i] -= h;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
      EXPECT_LE(relative_error(grad[i], fd, 1e-3), 1e-4) << obj.groups[k].name << "[" << i << "]";
    }
  }
}

TEST(ObjectiveTest, GradientsRegression) {
  check_gradients(linear_dataset(20, 3, 2), Structure{3, 2, 2, Regression{std::exp(-2.0)}, false},
                  small_config());
}

TEST(ObjectiveTest, GradientsClassification) {
  check_gradients(two_class_dataset(20, 3, 3), Structure{3, 2, 2, Classification{3}, false},
                  small_config());
}

TEST(ObjectiveTest, DivergenceZeroAtInitAndDecomposes) {
  const Dataset ds = linear_dataset(10, 3, 4);
  FitConfig cfg = small_config();
  const Network skeleton = init_from_prior(Structure{3, 2, 2, Regression{cfg.sigma_y2}, false}, cfg);
  RawParams raw = to_raw(skeleton);
  RngStream rng(6);
  const auto noise = draw_training_noise(rng, skeleton, cfg.k_train);
  std::vector<std::size_t> one = {3};
  Graph g;
  const Objective obj = objective(g, raw, skeleton, make_batch(ds, one), noise, cfg, ds.size());
  EXPECT_LE(std::abs(obj.divergence.value().item()), 1e-10);
  EXPECT_TRUE(std::isfinite(obj.mean_log_lik.value().item()));
  EXPECT_NEAR(obj.loss.value().item(),
              obj.divergence.value().item() - 10.0 * obj.mean_log_lik.value().item(), 1e-9);
  cfg.likelihood_scale = LikelihoodScale::kBatchMean;
  Graph g2;
  const Objective obj2 = objective(g2, raw, skeleton, make_batch(ds, one), noise, cfg, ds.size());
  EXPECT_NEAR(obj2.loss.value().item(),
              obj2.divergence.value().item() - obj2.mean_log_lik.value().item(), 1e-9);
}

TEST(ObjectiveTest, FrozenBankHasNoOmegaGroups) {
  FitConfig cfg = small_config();
  const Network skeleton = init_from_prior(Structure{3, 2, 2, Regression{0.1}, true}, cfg);
  ASSERT_TRUE(skeleton.layers[0].frozen_omega.has_value());
  RawParams raw = to_raw(skeleton);
  for (const ParamGroup& grp : trainable_groups(raw, skeleton, false)) {
    EXPECT_EQ(grp.name.find("omega"), std::string::npos) << grp.name;
  }
}

TEST(ObjectiveTest, FullDatasetScalingIsUnbiasedAcrossBatchSizes) {
  const Dataset ds = linear_dataset(32, 2, 7);
  FitConfig cfg = small_config();
  cfg.bank_size = 4;
  cfg.k_train = 1;
  const Network skeleton = init_from_prior(Structure{2, 1, 1, Regression{0.5}, false}, cfg);
  RawParams raw = to_raw(skeleton);
  RngStream init(8);
  randomize(raw, init);
  // Noise fixed across draws so only batch sampling contributes variance.
  const auto noise = draw_training_noise(init, from_raw(raw, skeleton, false), 1);
  auto gradient_stats = [&](std::size_t b, std::uint64_t seed) {
    RngStream rng(seed);
    const std::size_t draws = 3000;
    std::vector<double> sum, sum_sq;
    for (std::size_t t = 0; t < draws; ++t) {
      std::vector<std::size_t> perm(ds.size());
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      perm.resize(b);
      Graph g;
      Objective obj = objective(g, raw, skeleton, make_batch(ds, perm), noise, cfg, ds.size());
      g.backward(obj.loss);
      const Tensor& grad = g.adjoint(obj.leaves[3]);  // layer1.mu_w
      sum.resize(grad.size());
      sum_sq.resize(grad.size());
      for (std::size_t i = 0; i < grad.size(); ++i) {
        sum[i] += grad[i];
        sum_sq[i] += grad[i] * grad[i];
      }
    }
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const double m = sum[i] / draws;
      out.emplace_back(m, std::sqrt((sum_sq[i] / draws - m * m) / draws));
    }
    return out;
  };
  const auto small = gradient_stats(4, 1), large = gradient_stats(8, 2);
  for (std::size_t i = 0; i < small.size(); ++i) {
    const double se = std::hypot(small[i].second, large[i].second);
    EXPECT_LT(std::abs(small[i].first - large[i].first), 4.0 * se) << i;
  }
}

TEST(FitTest, ZeroEpochsReturnsInit) {
  FitConfig cfg = small_config();
  cfg.epochs = 0;
  const Structure st{2, 1, 1, Regression{0.1}, false};
  const FitResult r = fit(linear_dataset(20, 2, 1), cfg, st);
  EXPECT_EQ(r.network, init_from_prior(st, cfg));
  EXPECT_EQ(r.report.iterations, 0u);
}

TEST(FitTest, DeterministicGivenSeed) {
  FitConfig cfg = small_config();
  cfg.epochs = 3;
  const Dataset ds = linear_dataset(30, 2, 2);
  const Structure st{2, 2, 2, Regression{0.1}, false};
  const FitResult a = fit(ds, cfg, st), b = fit(ds, cfg, st);
  EXPECT_EQ(a.report.objective, b.report.objective);
  EXPECT_EQ(a.network, b.network);
  cfg.seed += 1;
  EXPECT_NE(fit(ds, cfg, st).report.objective, a.report.objective);
}

TEST(FitTest, LearnsToyLinearRegression) {
  const Dataset all = linear_dataset(250, 2, 3);
  std::vector<std::size_t> tr(200), te(50);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 200);
  const Dataset train = all.subset(tr), test = all.subset(te);
  FitConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 50;
  cfg.learning_rate = 0.02;
  cfg.bank_size = 50;
  cfg.early_stop_patience = 0;
  cfg.seed = 4;
  const FitResult r = fit(train, cfg, Structure{2, 1, 1, Regression{cfg.sigma_y2}, false});
  ASSERT_EQ(r.report.iterations, 2000u);
  // Mean over steps 190..199 against step 0: the first 200 steps make progress.
  double tail = 0.0;
  for (std::size_t i = 190; i < 200; ++i) tail += r.report.objective[i] / 10.0;
  EXPECT_LT(tail, r.report.objective.front());
  for (double d : r.report.divergence) EXPECT_GE(d, -1e-9);
  RngStream rng(5);
  const auto preds = forward_predict_batch(test.features, r.network, rng, 5, cfg.k_eval);
  Tensor p({50, 1}), baseline({50, 1});
  double train_mean = 0.0;
  for (std::size_t i = 0; i < 200; ++i) train_mean += train.targets[i] / 200.0;
  for (std::size_t i = 0; i < 50; ++i) {
    p[i] = preds[i].output[0];
    baseline[i] = train_mean;
  }
  EXPECT_LT(rmse(p, test.targets), rmse(baseline, test.targets));
  for (const LayerParams& l : r.network.layers) {
    for (double s : l.q_w.sigma2()) EXPECT_GT(s, 0.0);
  }
}

TEST(FitTest, AbortsOnPersistentNonFiniteLoss) {
  Dataset ds = linear_dataset(16, 2, 6);
  for (double& v : ds.targets.data()) v = 1e200;
  FitConfig cfg = small_config();
  cfg.epochs = 5;
  try {
    fit(ds, cfg, Structure{2, 1, 1, Regression{0.1}, false});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("two consecutive"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace dtbks
