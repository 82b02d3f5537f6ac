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

#include <algorithm>
#include <cmath>

#include "dtbks/numerics/tensor.hpp"

namespace dtbks::testing {

// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double mean(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

inline double variance(const Tensor& t) {
  const double m = mean(t);
  double s = 0.0;
  for (double v : t.data()) s += (v - m) * (v - m);
  return s / static_cast<double>(t.size() - 1);
}

}  // namespace dtbks::testing
