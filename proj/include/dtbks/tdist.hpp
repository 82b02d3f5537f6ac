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
#include <span>
#include <vector>

#include "dtbks/numerics/rng.hpp"
#include "dtbks/numerics/tensor.hpp"

namespace dtbks {

// Multivariate Student's-t with diagonal scale matrix diag(sigma2) and a
// single degrees-of-freedom parameter. Immutable once constructed.
class DiagStudentT {
 public:
  // Throws DomainError unless dim >= 1, every sigma2 > 0 and nu > 0.
  DiagStudentT(std::vector<double> mu, std::vector<double> sigma2, double nu);

  // t(0, I, nu): the prior over feature parameters and mixing weights.
  static DiagStudentT standard(std::size_t dim, double nu);

  std::size_t dim() const { return mu_.size(); }
  const std::vector<double>& mu() const { return mu_; }
  const std::vector<double>& sigma2() const { return sigma2_; }
  double nu() const { return nu_; }

  friend bool operator==(const DiagStudentT&, const DiagStudentT&) = default;

 private:
  std::vector<double> mu_;
  std::vector<double> sigma2_;
  double nu_;
};

// Squared Mahalanobis distance sum_i (y_i - mu_i)^2 / sigma2_i.
double mahalanobis_diag(std::span<const double> y, const DiagStudentT& dist);

double log_pdf(std::span<const double> y, const DiagStudentT& dist);

// Escort of a Student's-t, t(mu, nu/(nu+2) sigma2, nu+2): the normalized
// q^t with t = 1 + 2/(nu+1), written in closed form.
DiagStudentT escort(const DiagStudentT& dist);

// Deformed logarithm (x^(1-t) - 1)/(1-t); ln x at t = 1.
double t_log(double x, double t);

// mu + sqrt(nu/(nu+2)) * sigma (.) eps. With eps drawn by draw_noise this is a
// draw from escort(dist).
std::vector<double> reparam_sample(const DiagStudentT& dist, std::span<const double> eps);

// n x dim matrix of independent unit-scale Student's-t components with
// nu + 2 degrees of freedom.
Tensor draw_noise(RngStream& rng, const DiagStudentT& dist, std::size_t n);

}  // namespace dtbks
