/*
 * Copyright 2026 The fedlora Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedlora/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "fedlora/error.hpp"

namespace fedlora {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Rng(mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL)));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "Rng::below(0)");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double Rng::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(theta);
  return radius * std::cos(theta);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw Error(ErrorKind::kInvalidArgument, "gamma shape must be positive");
  if (shape < 1.0) {
    const double u = 1.0 - uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Mat gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::kInvalidArgument, "gaussian_matrix needs rows, cols >= 1");
  }
  Mat m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

Vec gaussian_vector(Rng& rng, std::size_t dim) {
  Vec v(dim);
  for (double& x : v.data()) x = rng.normal();
  return v;
}

Vec random_unit_vector(Rng& rng, std::size_t dim) {
  for (;;) {
    Vec v = gaussian_vector(rng, dim);
    if (norm(v) > 1e-8) return unit_normalize(v);
  }
}

}  // namespace fedlora
