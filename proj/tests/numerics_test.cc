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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/graph.hpp"
#include "dtbks/numerics/rng.hpp"
#include "dtbks/numerics/special.hpp"
#include "test_util.hpp"

namespace dtbks {
namespace {

using testing::relative_error;

// Reference values from a 30-digit mpmath evaluation of loggamma / digamma.
struct Reference {
  double x;
  double value;
};

TEST(SpecialTest, LgammaKnownValues) {
  EXPECT_EQ(lgamma(1.0), 0.0);
  EXPECT_NEAR(lgamma(0.5), 0.5723649429, 1e-10);
  EXPECT_NEAR(lgamma(2.5), 0.2846828705, 1e-10);
}

TEST(SpecialTest, LgammaMatchesHighPrecisionReference) {
  const std::vector<Reference> refs = {
      {1e-3, 6.9071788853838536617}, {0.5, 0.57236494292470008707},
      {2.5, 0.28468287047291915963}, {7.25, 7.0521854507385394449},
      {123.456, 469.6055471299294835}, {1e6, 12815504.56914761166},
  };
  for (const auto& r : refs) {
    EXPECT_LE(relative_error(lgamma(r.x), r.value), 1e-12) << "x=" << r.x;
  }
}

TEST(SpecialTest, LgammaRecurrence) {
  for (double x = 0.5; x <= 100.0; x += 0.173) {
    const double lhs = lgamma(x + 1.0);
    const double rhs = lgamma(x) + std::log(x);
    // Cancellation near the roots of ln Γ makes a pure relative test
    // meaningless there; scale by the size of the summands instead.
    const double scale = std::max({std::abs(lhs), std::abs(lgamma(x)), std::abs(std::log(x))});
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * scale) << "x=" << x;
  }
}

TEST(SpecialTest, DigammaKnownValues) {
  EXPECT_NEAR(digamma(1.0), -0.5772156649, 1e-10);
  EXPECT_NEAR(digamma(0.5), -1.9635100260, 1e-10);
  // ψ(10) from ψ(1) and ψ(x+1) = ψ(x) + 1/x.
  double psi = -0.57721566490153286061;
  for (int k = 1; k < 10; ++k) psi += 1.0 / k;
  EXPECT_LE(relative_error(digamma(10.0), psi), 1e-10);
  EXPECT_NEAR(digamma(10.0), 2.2517525891, 1e-10);
}

TEST(SpecialTest, DigammaMatchesHighPrecisionReference) {
  const std::vector<Reference> refs = {
      {1e-3, -1000.5755719318102797}, {0.5, -1.9635100260214234794},
      {1.0, -0.57721566490153286061}, {10.0, 2.2517525890667211076},
      {123.456, 4.8118293238289854123}, {1e6, 13.815510057964190771},
  };
  for (const auto& r : refs) {
    EXPECT_LE(relative_error(digamma(r.x), r.value), 1e-10) << "x=" << r.x;
  }
}

TEST(SpecialTest, DomainErrors) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  for (double bad : {0.0, -1.0, -0.5, nan, inf}) {
    EXPECT_THROW(lgamma(bad), DomainError) << bad;
    EXPECT_THROW(digamma(bad), DomainError) << bad;
  }
}

TEST(SpecialTest, SoftplusInverse) {
  for (double y : {1e-6, 0.1, 1.0, 2.0, 40.0}) {
    EXPECT_LE(relative_error(softplus(softplus_inverse(y)), y), 1e-12);
  }
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
}

TEST(GraphTest, ProductRule) {
  Graph g;
  Var x = g.scalar(2.0);
  Var y = g.scalar(3.0);
  Var loss = x * y;
  g.backward(loss);
  EXPECT_DOUBLE_EQ(g.adjoint(x).item(), 3.0);
  EXPECT_DOUBLE_EQ(g.adjoint(y).item(), 2.0);
}

TEST(GraphTest, LgammaGradientIsDigamma) {
  Graph g;
  Var x = g.scalar(1.0);
  g.backward(g.lgamma(x));
  EXPECT_NEAR(g.adjoint(x).item(), -0.5772156649, 1e-10);
}

TEST(GraphTest, NonScalarLossIsUsageError) {
  Graph g;
  Var x = g.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(g.exp(x)), UsageError);
}

TEST(GraphTest, NonFiniteValueNamesFirstNode) {
  Graph g;
  Var x = g.leaf(Tensor::vector({1.0, -1.0}), "x");
  Var l = g.log(x);  // log(-1) = NaN at node #1
  Var loss = g.sum(g.exp(l));
  try {
    g.backward(loss);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("#1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
  }
}

TEST(GraphTest, BroadcastingReducesGradient) {
  Graph g;
  Var row = g.leaf(Tensor::vector({1.0, 2.0, 3.0}));
  Var mat = g.leaf(Tensor::matrix(2, 3, {1, 1, 1, 2, 2, 2}));
  Var loss = g.sum(mat * row);
  g.backward(loss);
  EXPECT_EQ(g.adjoint(row).storage(), (std::vector<double>{3.0, 3.0, 3.0}));
  EXPECT_EQ(g.adjoint(mat).storage(), (std::vector<double>{1, 2, 3, 1, 2, 3}));
}

TEST(GraphTest, MatmulShapeMismatch) {
  Graph g;
  Var a = g.leaf(Tensor({2, 3}));
  Var b = g.leaf(Tensor({2, 3}));
  EXPECT_THROW(g.matmul(a, b), UsageError);
}

// Central finite differences of `build` w.r.t. every element of every input.
void expect_gradients_match(const std::vector<Tensor>& inputs,
                            const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                            double tol, const std::string& label) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  g.backward(build(g, vars));
  const double h = 1e-5;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        Graph g2;
        std::vector<Var> v2;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          v2.push_back(g2.leaf(std::move(t)));
        }
        return build(g2, v2).value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double analytic = g.adjoint(vars[k])[i];
      EXPECT_LE(relative_error(analytic, numeric, 1e-3), tol)
          << label << " input " << k << " elem " << i << " analytic=" << analytic
          << " numeric=" << numeric;
    }
  }
}

Tensor random_tensor(RngStream& rng, Tensor::Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

TEST(GraphTest, RandomFiveNodeGraphMatchesFiniteDifferences) {
  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> in = {random_tensor(rng, {}, 0.5, 2.0), random_tensor(rng, {}, 0.5, 2.0)};
    expect_gradients_match(
        in,
        [](Graph& g, const std::vector<Var>& v) {
          Var a = v[0] * v[1];           // 1
          Var b = g.sin(a);              // 2
          Var c = g.lgamma(v[0] + 1.0);  // 3
          Var d = b / (c + 2.0);         // 4
          return g.exp(d);               // 5
        },
        1e-5, "five-node");
  }
}

// Each primitive, composed with a random linear read-out so every output
// element contributes, over 100 randomized inputs.
TEST(GraphTest, EveryPrimitiveMatchesFiniteDifferences) {
  using Build = std::function<Var(Graph&, const std::vector<Var>&)>;
  struct Case {
    std::string name;
    std::vector<Tensor::Shape> shapes;
    double lo, hi;
    Build build;
  };
  const std::vector<Case> cases = {
      {"add", {{2, 3}, {3}}, -2, 2, [](Graph& g, auto& v) { return g.add(v[0], v[1]); }},
      {"sub", {{2, 3}, {2, 1}}, -2, 2, [](Graph& g, auto& v) { return g.sub(v[0], v[1]); }},
      {"mul", {{2, 3}, {}}, -2, 2, [](Graph& g, auto& v) { return g.mul(v[0], v[1]); }},
      {"div", {{3}, {3}}, 0.5, 2, [](Graph& g, auto& v) { return g.div(v[0], v[1]); }},
      {"neg", {{3}}, -2, 2, [](Graph& g, auto& v) { return g.neg(v[0]); }},
      {"add_scalar", {{3}}, -2, 2, [](Graph& g, auto& v) { return g.add_scalar(v[0], 0.7); }},
      {"mul_scalar", {{3}}, -2, 2, [](Graph& g, auto& v) { return g.mul_scalar(v[0], -1.3); }},
      {"pow_scalar", {{3}}, 0.5, 2, [](Graph& g, auto& v) { return g.pow_scalar(v[0], -0.65); }},
      {"matmul", {{2, 3}, {3, 4}}, -1, 1, [](Graph& g, auto& v) { return g.matmul(v[0], v[1]); }},
      {"transpose", {{2, 3}}, -1, 1, [](Graph& g, auto& v) { return g.transpose(v[0]); }},
      {"reshape", {{2, 3}}, -1, 1, [](Graph& g, auto& v) { return g.reshape(v[0], {3, 2}); }},
      {"exp", {{3}}, -2, 2, [](Graph& g, auto& v) { return g.exp(v[0]); }},
      {"log", {{3}}, 0.3, 3, [](Graph& g, auto& v) { return g.log(v[0]); }},
      {"sin", {{3}}, -3, 3, [](Graph& g, auto& v) { return g.sin(v[0]); }},
      {"cos", {{3}}, -3, 3, [](Graph& g, auto& v) { return g.cos(v[0]); }},
      {"sqrt", {{3}}, 0.3, 3, [](Graph& g, auto& v) { return g.sqrt(v[0]); }},
      {"square", {{3}}, -2, 2, [](Graph& g, auto& v) { return g.square(v[0]); }},
      {"softplus", {{3}}, -4, 4, [](Graph& g, auto& v) { return g.softplus(v[0]); }},
      {"lgamma", {{3}}, 0.2, 8, [](Graph& g, auto& v) { return g.lgamma(v[0]); }},
      {"sum", {{2, 3}}, -1, 1, [](Graph& g, auto& v) { return g.sum(v[0]); }},
      {"mean", {{2, 3}}, -1, 1, [](Graph& g, auto& v) { return g.mean(v[0]); }},
      {"log_softmax_pick", {{3, 4}}, -3, 3,
       [](Graph& g, auto& v) {
         const std::vector<std::size_t> labels = {0, 3, 1};
         return g.log_softmax_pick(v[0], labels);
       }},
  };
  RngStream rng(2024);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> in;
      for (const auto& s : c.shapes) in.push_back(random_tensor(rng, s, c.lo, c.hi));
      // Read-out weights are part of the test case, not differentiated.
      Graph probe;
      std::vector<Var> pv;
      for (const auto& t : in) pv.push_back(probe.leaf(t));
      const Tensor::Shape out_shape = c.build(probe, pv).value().shape();
      const Tensor weights = random_tensor(rng, out_shape, -1.0, 1.0);
      expect_gradients_match(
          in,
          [&](Graph& g, const std::vector<Var>& v) {
            Var out = c.build(g, v);
            return g.sum(g.mul(out, g.leaf(weights)));
          },
          1e-5, c.name);
    }
  }
}

TEST(SamplerTest, EmptyDraw) {
  RngStream rng(1);
  EXPECT_TRUE(sample_std_normal(rng, 0).empty());
}

TEST(SamplerTest, NormalMean) {
  RngStream rng(7);
  const Tensor z = sample_std_normal(rng, 1'000'000);
  const double mean = std::accumulate(z.data().begin(), z.data().end(), 0.0) / z.size();
  EXPECT_NEAR(mean, 0.0, 0.005);
}

TEST(SamplerTest, Deterministic) {
  RngStream a(99), b(99);
  EXPECT_EQ(sample_std_normal(a, 1000), sample_std_normal(b, 1000));
  RngStream c(5), d(5);
  EXPECT_EQ(sample_std_t(c, 2.1, 1000), sample_std_t(d, 2.1, 1000));
  RngStream e(5), f(5);
  EXPECT_EQ(sample_gamma(e, 0.3, 2.0, 1000), sample_gamma(f, 0.3, 2.0, 1000));
}

TEST(SamplerTest, ChildStreamsDiffer) {
  RngStream root(3);
  RngStream a = root.child(0), b = root.child(1), a2 = root.child(0);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_EQ(RngStream(3).child(0).next_u64(), a2.next_u64());
}

TEST(SamplerTest, GammaMeans) {
  RngStream rng(17);
  const Tensor g1 = sample_gamma(rng, 1.0, 1.0, 1'000'000);
  EXPECT_NEAR(testing::mean(g1), 1.0, 0.01);
  const Tensor g2 = sample_gamma(rng, 2.0, 3.0, 1'000'000);
  EXPECT_NEAR(testing::mean(g2), 6.0, 0.05);
  // Small shape goes through the boosting branch.
  const Tensor g3 = sample_gamma(rng, 0.3, 1.0, 1'000'000);
  EXPECT_NEAR(testing::mean(g3), 0.3, 0.005);
}

TEST(SamplerTest, GammaSupport) {
  RngStream rng(4);
  for (double k : {0.05, 0.5, 1.05, 3.0}) {
    const Tensor g = sample_gamma(rng, k, 1.0, 100'000);
    EXPECT_TRUE(std::all_of(g.data().begin(), g.data().end(), [](double v) { return v > 0.0; }))
        << "k=" << k;
  }
}

TEST(SamplerTest, GammaDomainErrors) {
  RngStream rng(4);
  EXPECT_THROW(sample_gamma(rng, 0.0, 1.0, 1), DomainError);
  EXPECT_THROW(sample_gamma(rng, 1.0, -1.0, 1), DomainError);
  EXPECT_THROW(sample_std_t(rng, 0.0, 1), DomainError);
}

TEST(SamplerTest, StudentTGaussianLimitVariance) {
  RngStream rng(23);
  EXPECT_NEAR(testing::variance(sample_std_t(rng, 1e8, 1'000'000)), 1.0, 0.01);
}

TEST(SamplerTest, StudentTVariance) {
  RngStream rng(29);
  EXPECT_NEAR(testing::variance(sample_std_t(rng, 4.1, 1'000'000)), 4.1 / 2.1, 0.05);
}

TEST(SamplerTest, StudentTMedian) {
  RngStream rng(31);
  Tensor t = sample_std_t(rng, 3.0, 1'000'000);
  auto& s = t.storage();
  std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
  EXPECT_NEAR(s[s.size() / 2], 0.0, 0.005);
}

}  // namespace
}  // namespace dtbks
