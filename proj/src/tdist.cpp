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

#include "dtbks/tdist.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/special.hpp"

namespace dtbks {

namespace {

constexpr double kLogTUnitBand = 1e-9;

void require_dim(std::size_t got, const DiagStudentT& dist, const char* what) {
  if (got != dist.dim()) {
    throw UsageError(std::string(what) + ": vector has dimension " + std::to_string(got) +
                     ", distribution has " + std::to_string(dist.dim()));
  }
}

}  // namespace

DiagStudentT::DiagStudentT(std::vector<double> mu, std::vector<double> sigma2, double nu)
    : mu_(std::move(mu)), sigma2_(std::move(sigma2)), nu_(nu) {
  if (mu_.empty()) throw DomainError("DiagStudentT: dimension must be >= 1");
  if (mu_.size() != sigma2_.size()) {
    throw DomainError("DiagStudentT: mu has " + std::to_string(mu_.size()) +
                      " entries but sigma2 has " + std::to_string(sigma2_.size()));
  }
  if (!(nu_ > 0.0) || !std::isfinite(nu_)) {
    throw DomainError("DiagStudentT: nu must be finite and > 0, got " + std::to_string(nu_));
  }
  for (std::size_t i = 0; i < sigma2_.size(); ++i) {
    if (!(sigma2_[i] > 0.0) || !std::isfinite(sigma2_[i]) || !std::isfinite(mu_[i])) {
      throw DomainError("DiagStudentT: invalid entry at index " + std::to_string(i));
    }
  }
}

DiagStudentT DiagStudentT::standard(std::size_t dim, double nu) {
  return DiagStudentT(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0), nu);
}

double mahalanobis_diag(std::span<const double> y, const DiagStudentT& dist) {
  require_dim(y.size(), dist, "mahalanobis_diag");
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - dist.mu()[i];
    d += r * r / dist.sigma2()[i];
  }
  return d;
}

double log_pdf(std::span<const double> y, const DiagStudentT& dist) {
  const double d = mahalanobis_diag(y, dist);
  const double nu = dist.nu();
  const double delta = static_cast<double>(dist.dim());
  double log_det = 0.0;
  for (double s : dist.sigma2()) log_det += std::log(s);
  return lgamma(0.5 * (nu + delta)) - lgamma(0.5 * nu) - 0.5 * log_det -
         0.5 * delta * std::log(std::numbers::pi * nu) -
         0.5 * (nu + delta) * std::log1p(d / nu);
}

DiagStudentT escort(const DiagStudentT& dist) {
  const double nu = dist.nu();
  const double shrink = nu / (nu + 2.0);
  std::vector<double> s2 = dist.sigma2();
  for (double& v : s2) v *= shrink;
  return DiagStudentT(dist.mu(), std::move(s2), nu + 2.0);
}

double t_log(double x, double t) {
  if (!(x > 0.0)) throw DomainError("t_log: x must be > 0, got " + std::to_string(x));
  if (std::abs(t - 1.0) < kLogTUnitBand) return std::log(x);
  const double a = 1.0 - t;
  return std::expm1(a * std::log(x)) / a;
}

std::vector<double> reparam_sample(const DiagStudentT& dist, std::span<const double> eps) {
  require_dim(eps.size(), dist, "reparam_sample");
  const double scale = std::sqrt(dist.nu() / (dist.nu() + 2.0));
  std::vector<double> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    out[i] = dist.mu()[i] + scale * std::sqrt(dist.sigma2()[i]) * eps[i];
  }
  return out;
}

Tensor draw_noise(RngStream& rng, const DiagStudentT& dist, std::size_t n) {
  Tensor out({n, dist.dim()});
  const double df = dist.nu() + 2.0;
  for (double& v : out.data()) v = rng.student_t(df);
  return out;
}

}  // namespace dtbks
