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

#ifndef FEDLORA_RNG_HPP_
#define FEDLORA_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>

#include "fedlora/linalg.hpp"

namespace fedlora {

// Seeded pseudo-random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions are implemented here
// because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Independent stream for (seed, a, b), e.g. (run seed, client, round).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  // Gamma(shape, 1).
  double gamma(double shape);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t mix64(std::uint64_t x);

Mat gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols);
Vec gaussian_vector(Rng& rng, std::size_t dim);
// Uniformly distributed on the unit sphere.
Vec random_unit_vector(Rng& rng, std::size_t dim);

}  // namespace fedlora

#endif  // FEDLORA_RNG_HPP_
