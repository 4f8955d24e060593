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

#ifndef FEDLORA_EXPERIMENT_HPP_
#define FEDLORA_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/datasets.hpp"
#include "fedlora/error.hpp"
#include "fedlora/fed.hpp"

namespace fedlora {

enum class ExperimentKind {
  kCompareProtocols,
  kTheoryHomog,
  kTheoryHeter,
  kFfaMonteCarlo,
  kNonlinearToy,
  kAblationSchedule,
  kAblationLocalSteps,
};

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment_kind(std::string_view text);

// Flat `key = value` configuration. `strategy`, `schedule` and `seeds`
// accumulate across repeated lines.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kCompareProtocols;

  // Task: "linear" or "classifier". nonlinear-toy always uses the classifier.
  std::string task = "classifier";

  // Linear tasks.
  std::size_t d = 20;
  std::size_t m = 100;
  std::size_t clients = 10;
  double b_norm = 1.0;
  double gamma = 0.0;
  SampleMode mode = SampleMode::kFiniteSample;
  bool resample = false;

  // Theory runs.
  std::vector<double> delta0 = {0.5};
  std::size_t trials = 2000;
  std::size_t iterations = 20;
  double eta_scale = 1.0;  // eta = eta_scale / ||b*||^2 (homog) or / (2 L^2) (heter)
  bool fresh_samples = true;

  // Classifier tasks.
  std::string dataset = "clusters";  // or "idx"
  ClusterSpec clusters;
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
  std::string partition = "label";  // "label", "dirichlet" or "iid"
  std::size_t labels_per_client = 1;
  double dirichlet_alpha = 0.5;

  // Federated training.
  std::size_t rounds = 10;
  std::size_t rank = 1;
  std::size_t local_steps = 1;
  std::size_t local_epochs = 0;
  std::size_t batch_size = 0;
  double eta = 0.01;
  double eta_b_scale = 1.0;
  double alpha = 1.0;
  double a_std = 0.0;
  std::string b_init = "zero";  // "zero" or "gaussian"
  double b_std = 0.0;
  LocalSolver solver = LocalSolver::kGradient;
  std::vector<StrategyKind> strategies;
  std::vector<std::string> schedules;  // ablation-schedule variants
  std::vector<std::size_t> local_steps_sweep = {1, 2, 4};
  std::size_t step_budget = 0;  // local_steps * rounds; 0 means use `rounds`

  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 1;
  bool timing = false;

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws ParseError or ValidationError; messages start with "line N:".
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& config);
// Throws ValidationError.
void validate(const ExperimentConfig& config);

// Parses "alternating", "freeze-a", "both", "alternate-then-freeze:K" or a
// comma list such as "B,B,B,A".
UpdateSchedule parse_schedule_spec(std::string_view text);

// --- summaries -------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

struct LabeledTrace {
  std::string strategy;
  CsvTable table;
};

struct SummaryRow {
  std::string strategy;
  std::size_t seeds = 0;
  std::optional<double> loss_mean, loss_std;
  std::optional<double> accuracy_mean, accuracy_std;
  std::optional<double> angle_mean, angle_std;
};

inline constexpr std::string_view kSummaryCsvHeader =
    "strategy,seeds,final_loss_mean,final_loss_std,final_accuracy_mean,final_accuracy_std,"
    "final_angle_mean,final_angle_std";

// Mean and sample standard deviation of final-row metrics per strategy, in
// order of first appearance. Throws SchemaMismatch.
std::vector<SummaryRow> summarize(const std::vector<LabeledTrace>& traces);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

// --- runs --------------------------------------------------------------------

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitIo = 2,
  kExitDivergence = 3,
};

int exit_code_for(ErrorKind kind);

struct ExperimentOutcome {
  int exit_code = kExitOk;
  std::string message;
  std::vector<std::filesystem::path> files;
  std::vector<SummaryRow> summary;
};

// One CSV per (strategy, seed) in config.output_dir plus summary.csv.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

// Pieces of run_experiment, exposed for tests.
std::unique_ptr<FederatedTask> build_task(const ExperimentConfig& config, std::uint64_t seed);
FedConfig build_fed_config(const ExperimentConfig& config, StrategyKind strategy,
                           std::uint64_t seed);

}  // namespace fedlora

#endif  // FEDLORA_EXPERIMENT_HPP_
