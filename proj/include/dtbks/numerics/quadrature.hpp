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

#include <functional>

namespace dtbks {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  double tail_value = 0.0;     // contribution of |x - center| > window
  double tail_exponent = 0.0;  // observed power-law decay exponent of |f|
};

// Integral of f over the whole real line for integrands that decay like a
// power law. The window [center - 200 spread, center + 200 spread] is split at
// geometric breakpoints and integrated with adaptive Gauss-Kronrod; each tail
// is mapped onto (0, 1] by x = center +- R/u and integrated with tanh-sinh.
// Throws NumericalError when the tails are not integrable (decay exponent
// <= 1) or the combined error estimate exceeds abs_tol.
QuadratureResult integrate_real_line(const std::function<double(double)>& f, double center,
                                     double spread, double abs_tol = 1e-8);

}  // namespace dtbks
