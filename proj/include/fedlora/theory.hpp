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

#ifndef FEDLORA_THEORY_HPP_
#define FEDLORA_THEORY_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/linear_task.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

// Below this the angle between two unit vectors carries no information.
inline constexpr double kAngleFloor = 1e-12;

struct AltMinOptions {
  double eta = 0.0;
  std::size_t iterations = 0;
  // Draw fresh designs X_i every iteration. Reusing one design is useful for
  // exploration but falls outside the sample-splitting analysis.
  bool fresh_samples = true;
  // Stop early once delta <= stop_below.
  std::optional<double> stop_below;
  double slack = 0.05;
};

struct ContractionReport {
  std::vector<double> deltas;  // delta^0 .. delta^T
  std::vector<double> ratios;  // delta^{t+1}/delta^t while delta^t > kAngleFloor
  std::vector<double> losses;  // global population loss of (a^t, b_bar^t)
  std::optional<double> bound;  // unset when eta exceeds the bound's step limit
  double slack = 0.05;
  std::size_t violations = 0;  // ratios above bound + slack
  Vec a_final;
  Vec b_next;  // server average of exact local b at a_final
  std::size_t iterations() const noexcept { return deltas.empty() ? 0 : deltas.size() - 1; }
};

// Alternating minimization with exact local b, server averaging of b and one
// averaged gradient step on a followed by normalization, per iteration.
ContractionReport altmin_gd(const LinearTask& task, const Vec& a0, const AltMinOptions& options,
                            Rng& rng);

// sqrt(1 - eta (1 - delta0^2) ||b*||^2). Throws StepTooLarge if
// eta > 1 / ||b*||^2 and BadRange for delta0 outside (0, 1) or eta <= 0.
double contraction_bound(double delta0, double eta, double b_star_norm);

// ceil(2 / (c (1 - delta0^2)) * ln(delta0 / eps)). Throws BadRange unless
// 0 < eps <= delta0 < 1 and 0 < c < 1.
std::size_t iterations_needed(double delta0, double eps, double c);

// (N (4 - m) - 2) / (N^2 m (m - 2)).
double ffa_c_tilde(std::size_t n_clients, std::size_t m);

struct FfaLossPrediction {
  double predicted = 0.0;
  double c_tilde = 0.0;
  std::size_t n_clients = 0;
  std::size_t m = 0;
  double delta0 = 0.0;
  double b_star_norm = 0.0;
};

// (1 + c_tilde) ||b*||^2 delta0^2. Throws BadRange unless m >= 3, N >= 1.
FfaLossPrediction ffa_homog_predicted_loss(std::size_t n_clients, std::size_t m, double delta0,
                                           double b_star_norm);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t trials = 0;
};

inline constexpr std::size_t kMinMonteCarloTrials = 100;

// Frozen-a loss over fresh designs. Trials may run on `workers` threads;
// each trial owns a derived Rng and results merge in trial order.
MonteCarloEstimate ffa_homog_empirical_loss(const LinearTask& task, const Vec& a0,
                                            std::size_t trials, Rng& rng,
                                            std::size_t workers = 1);

// (1/N) sum_i ||a* b_i*^T - a b^T||_F^2.
double population_global_loss(const LinearTask& task, const Vec& a, const Vec& b);

// Population loss with a frozen at a0 and b = b_bar* (a*^T a0). Throws
// FiniteSampleMode.
double ffa_heter_loss_exact(const LinearTask& task, const Vec& a0);

struct PopulationStep {
  Vec a_next;
  Vec b_bar;
};

// max_i ||b_i*||, or task.l_max when set.
double task_l_max(const LinearTask& task);

// One exact population iteration on a heterogeneous task. Throws
// StepTooLarge unless eta <= 1 / (2 L_max^2), FiniteSampleMode for sampled tasks.
PopulationStep heter_population_round(const Vec& a, const LinearTask& task, double eta);

// Rows share the training-trace columns plus the theory columns.
struct TheoryRow {
  std::size_t round = 0;
  std::string trained_factor;
  std::optional<double> global_loss;
  std::optional<double> angle_distance;
  std::optional<double> ratio;
  std::optional<double> bound;
  std::optional<double> predicted_loss;
  std::optional<double> empirical_loss;
  std::optional<double> std_err;
};

inline constexpr const char* kTheoryCsvHeader =
    "round,trained_factor,global_loss,angle_distance,test_accuracy,elapsed_ms,"
    "ratio,bound,predicted_loss,empirical_loss,std_err";

std::vector<TheoryRow> contraction_rows(const ContractionReport& report);
void write_theory_csv(std::ostream& out, const std::vector<TheoryRow>& rows);

// `fedlora verify`: each closed-form check with its verdict.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<CheckResult> run_theory_checks(std::uint64_t seed = 1);

}  // namespace fedlora

#endif  // FEDLORA_THEORY_HPP_
