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

#include "dtbks/tdivergence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/quadrature.hpp"
#include "dtbks/numerics/special.hpp"

namespace dtbks {

namespace {

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(what) + " must be finite and > 0, got " + std::to_string(x));
  }
}

// ln of Γ((nu+1)/2) / (Γ(nu/2) sqrt(pi nu)).
double log_unit_normalizer(double nu) {
  return lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * nu);
}

}  // namespace

double t_of(double nu_theta) {
  require_positive(nu_theta, "t_of: nu_theta");
  return 2.0 / (1.0 + nu_theta) + 1.0;
}

double psi_q(double nu_theta, double sigma_i) {
  require_positive(nu_theta, "psi_q: nu_theta");
  require_positive(sigma_i, "psi_q: sigma");
  return std::exp(-2.0 / (nu_theta + 1.0) * (log_unit_normalizer(nu_theta) - std::log(sigma_i)));
}

double psi_p(double nu) {
  require_positive(nu, "psi_p: nu");
  return std::exp(-2.0 / (nu + 1.0) * log_unit_normalizer(nu));
}

DivergenceTerms dt_closed(const DiagStudentT& q, double prior_nu) {
  require_positive(prior_nu, "dt_closed: prior_nu");
  const double nu_theta = q.nu();
  DivergenceTerms out;
  out.t_used = t_of(nu_theta);
  out.psi_p = psi_p(prior_nu);
  const double inv_one_minus_t = 1.0 / (1.0 - out.t_used);
  const double lq = log_unit_normalizer(nu_theta);
  out.per_dimension.resize(q.dim());
  out.psi_q.resize(q.dim());
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double s2 = q.sigma2()[i];
    const double mu = q.mu()[i];
    out.psi_q[i] = std::exp(-2.0 / (nu_theta + 1.0) * (lq - 0.5 * std::log(s2)));
    out.per_dimension[i] = out.psi_q[i] * inv_one_minus_t * (1.0 + 1.0 / nu_theta) -
                           out.psi_p * inv_one_minus_t * (1.0 + (s2 + mu * mu) / prior_nu);
    out.total += out.per_dimension[i];
  }
  return out;
}

Var dt_closed(Graph& g, Var mu, Var sigma2, Var nu_theta, double prior_nu) {
  require_positive(prior_nu, "dt_closed: prior_nu");
  if (nu_theta.value().size() != 1 || mu.value().shape() != sigma2.value().shape()) {
    throw UsageError("dt_closed: need scalar nu_theta and matching mu/sigma2 shapes");
  }
  const double log_pi = std::log(std::numbers::pi);
  // ln Γ((ν+1)/2) - ln Γ(ν/2) - ½ ln(πν)
  Var log_norm = g.lgamma((nu_theta + 1.0) * 0.5) - g.lgamma(nu_theta * 0.5) -
                 (g.log(nu_theta) + log_pi) * 0.5;
  Var exponent = -2.0 / (nu_theta + 1.0);
  Var psi_q_vec = g.exp((log_norm - g.log(sigma2) * 0.5) * exponent);
  // 1/(1 - t) = -(ν + 1)/2
  Var inv_one_minus_t = (nu_theta + 1.0) * -0.5;
  const double psi_prior = psi_p(prior_nu);
  Var q_part = psi_q_vec * (1.0 + 1.0 / nu_theta);
  Var p_part = (sigma2 + g.square(mu)) * (psi_prior / prior_nu) + psi_prior;
  return g.sum((q_part - p_part) * inv_one_minus_t);
}

double dt_quadrature(const DiagStudentT& q, const DiagStudentT& p, double t) {
  if (q.dim() != 1 || p.dim() != 1) {
    throw UsageError("dt_quadrature: both distributions must be 1-dimensional");
  }
  if (!(t > 1.0)) throw DomainError("dt_quadrature: t must be > 1, got " + std::to_string(t));
  const double spread = std::max({std::sqrt(q.sigma2()[0]), std::sqrt(p.sigma2()[0]),
                                  std::abs(q.mu()[0] - p.mu()[0])});
  const double center = q.mu()[0];
  auto log_q = [&](double x) { return log_pdf(std::span<const double>(&x, 1), q); };
  auto log_p = [&](double x) { return log_pdf(std::span<const double>(&x, 1), p); };

  try {
    const double z =
        integrate_real_line([&](double x) { return std::exp(t * log_q(x)); }, center, spread)
            .value;
    const double log_z = std::log(z);
    const double a = 1.0 - t;
    // q~ (log_t q - log_t p) = q~ (q^(1-t) - p^(1-t)) / (1-t), all in log space.
    auto integrand = [&](double x) {
      const double lq = log_q(x);
      const double lesc = t * lq - log_z;
      return (std::exp(lesc + a * lq) - std::exp(lesc + a * log_p(x))) / a;
    };
    return integrate_real_line(integrand, center, spread).value;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("dt_quadrature(q=t(") + std::to_string(q.mu()[0]) + "," +
                         std::to_string(q.sigma2()[0]) + "," + std::to_string(q.nu()) +
                         "), p=t(" + std::to_string(p.mu()[0]) + "," +
                         std::to_string(p.sigma2()[0]) + "," + std::to_string(p.nu()) +
                         "), t=" + std::to_string(t) + "): " + e.what());
  }
}

}  // namespace dtbks
