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

#include <vector>

#include "dtbks/numerics/graph.hpp"
#include "dtbks/tdist.hpp"

namespace dtbks {

struct DivergenceTerms {
  double total = 0.0;
  std::vector<double> per_dimension;
  double t_used = 1.0;
  std::vector<double> psi_q;
  double psi_p = 0.0;
};

// t = 1 + 2/(1 + nu_theta).
double t_of(double nu_theta);

// Normalizer power of a 1-d Student's-t with scale sigma_i, raised to
// -2/(nu_theta + 1). Evaluated in log space.
double psi_q(double nu_theta, double sigma_i);
double psi_p(double nu);

// Closed-form t-divergence of a diagonal Student's-t q from the prior
// t(0, I, prior_nu), summed over dimensions with t = t_of(q.nu()). Exact when
// q.nu() == prior_nu; see dt_quadrature for the definitional value.
DivergenceTerms dt_closed(const DiagStudentT& q, double prior_nu);

// Differentiable closed form on the tape: mu and sigma2 are vectors of equal
// length, nu_theta is a scalar. Returns a scalar node.
Var dt_closed(Graph& g, Var mu, Var sigma2, Var nu_theta, double prior_nu);

// Definitional t-divergence of two 1-d Student's-t densities,
// int q~ log_t q - int q~ log_t p with q~ = q^t / int q^t, by quadrature
// (absolute tolerance 1e-8). Throws NumericalError with diagnostics when the
// integral diverges or quadrature fails to converge.
double dt_quadrature(const DiagStudentT& q, const DiagStudentT& p, double t);

}  // namespace dtbks
