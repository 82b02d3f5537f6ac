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

#include "dtbks/numerics/quadrature.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "dtbks/errors.hpp"

namespace dtbks {

namespace {

constexpr double kWindow = 200.0;

double decay_exponent(const std::function<double(double)>& f, double center, double radius) {
  // Sampled far beyond the window, where the asymptotic power law dominates.
  double worst = std::numeric_limits<double>::infinity();
  for (double sign : {-1.0, 1.0}) {
    const double r1 = radius * 1e4;
    const double a = std::abs(f(center + sign * r1));
    const double b = std::abs(f(center + sign * 2.0 * r1));
    if (a == 0.0 || b == 0.0) continue;  // faster than any power at this range
    worst = std::min(worst, -std::log2(b / a));
  }
  return worst;
}

}  // namespace

QuadratureResult integrate_real_line(const std::function<double(double)>& f, double center,
                                     double spread, double abs_tol) {
  if (!(spread > 0.0) || !std::isfinite(center)) {
    throw UsageError("integrate_real_line: spread must be > 0 and center finite");
  }
  QuadratureResult result;
  const double radius = kWindow * spread;
  result.tail_exponent = decay_exponent(f, center, radius);
  if (result.tail_exponent <= 1.0) {
    std::ostringstream msg;
    msg << "integrand tails decay like |x|^-" << result.tail_exponent
        << " (exponent <= 1): integral diverges; center=" << center << " spread=" << spread;
    throw NumericalError(msg.str());
  }

  constexpr std::array<double, 7> kBreaks = {0.0, 0.5, 2.0, 8.0, 32.0, 100.0, kWindow};
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double body = 0.0, body_err = 0.0;
  for (double sign : {-1.0, 1.0}) {
    for (std::size_t i = 0; i + 1 < kBreaks.size(); ++i) {
      const double a = center + sign * kBreaks[i] * spread;
      const double b = center + sign * kBreaks[i + 1] * spread;
      double err = 0.0;
      const double v = GK::integrate(f, std::min(a, b), std::max(a, b), 20, 1e-13, &err);
      body += v;
      body_err += err;
    }
  }

  boost::math::quadrature::tanh_sinh<double> tanh_sinh;
  double tails = 0.0, tail_err = 0.0;
  for (double sign : {-1.0, 1.0}) {
    auto mapped = [&](double u) {
      if (u <= 0.0) return 0.0;
      const double x = center + sign * radius / u;
      const double v = f(x) * radius / (u * u);
      return std::isfinite(v) ? v : 0.0;
    };
    double err = 0.0;
    tails += tanh_sinh.integrate(mapped, 0.0, 1.0, 1e-12, &err);
    tail_err += err;
  }

  result.value = body + tails;
  result.tail_value = tails;
  result.error_estimate = body_err + tail_err;
  if (!std::isfinite(result.value) || result.error_estimate > abs_tol) {
    std::ostringstream msg;
    msg << "quadrature did not converge: value=" << result.value
        << " error_estimate=" << result.error_estimate << " (tolerance " << abs_tol
        << "), tail=" << tails << " tail_exponent=" << result.tail_exponent;
    throw NumericalError(msg.str());
  }
  return result;
}

}  // namespace dtbks
