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

#include "dtbks/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dtbks/errors.hpp"

namespace dtbks {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::child(std::uint64_t stream_id) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL)));
}

double RngStream::uniform() {
  // 53 random mantissa bits, shifted off zero by half an ulp.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  return u * f;
}

double RngStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale)) {
    throw DomainError("gamma: shape and scale must be > 0, got shape=" + std::to_string(shape) +
                      " scale=" + std::to_string(scale));
  }
  if (shape < 1.0) {
    // Gamma(k) = Gamma(k + 1) * U^(1/k); computed in log space so tiny k
    // cannot underflow to an exact zero.
    const double g = gamma(shape + 1.0, 1.0);
    const double log_v = std::log(g) + std::log(uniform()) / shape;
    return std::max(std::exp(log_v), std::numeric_limits<double>::min()) * scale;
  }
  // Marsaglia & Tsang squeeze/rejection.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

double RngStream::student_t(double df) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    throw DomainError("student_t: df must be > 0, got " + std::to_string(df));
  }
  const double z = normal();
  const double chi2 = gamma(0.5 * df, 2.0);
  return z / std::sqrt(chi2 / df);
}

std::size_t RngStream::below(std::size_t n) {
  if (n == 0) throw UsageError("below(0)");
  // Rejection sampling avoids modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Tensor sample_std_normal(RngStream& rng, std::size_t n) {
  Tensor out({n});
  for (double& v : out.data()) v = rng.normal();
  return out;
}

Tensor sample_gamma(RngStream& rng, double shape, double scale, std::size_t n) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw DomainError("sample_gamma: shape and scale must be > 0");
  }
  Tensor out({n});
  for (double& v : out.data()) v = rng.gamma(shape, scale);
  return out;
}

Tensor sample_std_t(RngStream& rng, double df, std::size_t n) {
  if (!(df > 0.0)) throw DomainError("sample_std_t: df must be > 0");
  Tensor out({n});
  for (double& v : out.data()) v = rng.student_t(df);
  return out;
}

}  // namespace dtbks
