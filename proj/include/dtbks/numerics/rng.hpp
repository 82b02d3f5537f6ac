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
#include <cstdint>
#include <optional>
#include <random>

#include "dtbks/numerics/tensor.hpp"

namespace dtbks {

// Seeded Mersenne-Twister stream. The integer sequence of std::mt19937_64 is
// fixed by the standard; every floating-point transform on top of it is ours,
// so draws are reproducible across platforms and standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Independent child stream keyed by (seed, stream_id).
  RngStream child(std::uint64_t stream_id) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Gamma(shape, scale) with mean shape * scale.
  double gamma(double shape, double scale = 1.0);
  // Standard (unit scale) Student's-t with df degrees of freedom.
  double student_t(double df);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor sample_std_normal(RngStream& rng, std::size_t n);
Tensor sample_gamma(RngStream& rng, double shape, double scale, std::size_t n);
Tensor sample_std_t(RngStream& rng, double df, std::size_t n);

}  // namespace dtbks
