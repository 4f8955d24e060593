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

#ifndef FEDLORA_LINEAR_TASK_HPP_
#define FEDLORA_LINEAR_TASK_HPP_

#include <cstddef>
#include <optional>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/objective.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

enum class SampleMode { kFiniteSample, kPopulation };

// Rank-1 linear regression Y_i = X_i a* b_i*^T shared by N clients.
struct LinearTask {
  std::size_t d = 0;
  std::size_t m = 0;  // samples per client per step
  Vec a_star;
  std::vector<Vec> b_stars;
  SampleMode mode = SampleMode::kFiniteSample;
  std::optional<double> l_max;

  std::size_t num_clients() const noexcept { return b_stars.size(); }
  bool homogeneous() const;
  Vec b_bar_star() const;
  // Throws BadSpec when shapes or the L_max bound are violated.
  void validate() const;
};

// All clients share b* with ||b*|| = b_norm; a* is a seeded unit vector.
LinearTask make_homogeneous_task(std::size_t d, std::size_t m, std::size_t n_clients,
                                 double b_norm, SampleMode mode, Rng& rng);

// b_i* = b_bar* + gamma z_i with z_i Gaussian, re-centred to mean zero and
// rescaled so (1/N) sum ||z_i||^2 = 1; the client variance is then gamma^2.
LinearTask make_heterogeneous_task(std::size_t d, std::size_t m, std::size_t n_clients,
                                   double b_bar_norm, double gamma, SampleMode mode, Rng& rng);

struct LinearShard {
  SampleMode mode = SampleMode::kFiniteSample;
  Mat X;  // m x d, empty in population mode
  Mat Y;  // m x d, empty in population mode
  Vec a_star;
  Vec b_star;
};

// Fresh Gaussian design for `client`. Throws PopulationMode for population tasks.
LinearShard gen_linear_shard(const LinearTask& task, std::size_t client, Rng& rng);
// Throws FiniteSampleMode for finite-sample tasks.
LinearShard population_shard(const LinearTask& task, std::size_t client);

// (1/m)||Y - X a b^T||^2, or ||a* b*^T - a b^T||^2 in population mode.
double local_loss_linear(const LinearShard& shard, const Vec& a, const Vec& b);

inline constexpr double kDegenerateDesignTolerance = 1e-12;

// argmin_b of the local loss for unit a. Throws DegenerateDesign when
// a^T X^T X a <= 1e-12 m.
Vec solve_b_exact(const LinearShard& shard, const Vec& a);

// Gradient of local_loss_linear with respect to a.
Vec grad_a_linear(const LinearShard& shard, const Vec& a, const Vec& b);

struct ClientVariance {
  double gamma_sq = 0.0;
};

ClientVariance client_variance(const LinearTask& task);

// Adapter-shaped view of a linear shard for the round engine; handles any
// rank and a frozen base weight.
class LinearObjective final : public LocalObjective {
 public:
  explicit LinearObjective(LinearShard shard);

  const LinearShard& shard() const noexcept { return shard_; }

  std::size_t num_samples() const override;
  double loss(const GlobalModel& model) const override;
  FactorGrads gradient(const GlobalModel& model, TrainMask mask,
                       std::span<const std::size_t> rows) const override;
  bool has_exact_b() const override { return true; }
  Mat exact_b(const GlobalModel& model) const override;

 private:
  LinearShard shard_;
  Mat target_;  // a* b*^T
};

// Solve (S) x = rhs column-wise for symmetric positive definite S.
// Throws DegenerateDesign if a pivot falls at or below `floor`.
Mat solve_spd(const Mat& s, const Mat& rhs, double floor);

}  // namespace fedlora

#endif  // FEDLORA_LINEAR_TASK_HPP_
