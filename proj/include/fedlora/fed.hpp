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

#ifndef FEDLORA_FED_HPP_
#define FEDLORA_FED_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/datasets.hpp"
#include "fedlora/linalg.hpp"
#include "fedlora/linear_task.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/objective.hpp"
#include "fedlora/rng.hpp"
#include "fedlora/two_layer.hpp"

namespace fedlora {

// ---------------------------------------------------------------------------
// Aggregation

enum class StrategyKind { kRoLoRA, kFfaLoRA, kFedAvgLoRA, kFlexLoRA, kFLoRA };

std::string_view to_string(StrategyKind kind);
// Case-insensitive; accepts the canonical names returned by to_string.
std::optional<StrategyKind> parse_strategy(std::string_view text);
UpdateSchedule default_schedule(StrategyKind kind);
// RoLoRA: any schedule without AB. FFA-LoRA: B only. Others: AB only.
// Throws BadSpec otherwise.
void validate_schedule(StrategyKind kind, const UpdateSchedule& schedule);

// Mean of the unfrozen factor; the frozen one is passed through. Throws
// FrozenFactorMismatch if the frozen factor differs across clients.
LoraAdapter aggregate_rolora(std::span<const LoraAdapter> locals, TrainMask mask);
// Factor-wise means.
LoraAdapter aggregate_fedavg(std::span<const LoraAdapter> locals);
// || mean(alpha A_i B_i) - alpha mean(A_i) mean(B_i) ||_F
double interference_gap(std::span<const LoraAdapter> locals);
// Best rank-r approximation of the mean product, as A = U S / alpha, B = V^T.
LoraAdapter aggregate_flexlora(std::span<const LoraAdapter> locals, std::size_t r);
// A = [A_1 ... A_N], B = [B_1; ...; B_N] / N, rank N r.
LoraAdapter aggregate_flora(std::span<const LoraAdapter> locals);

// Tolerance on frozen factors, which are broadcast copies.
inline constexpr double kFrozenTolerance = 1e-15;

// ---------------------------------------------------------------------------
// Local training

enum class LocalSolver {
  kGradient,  // gradient steps on the trainable factor(s)
  kExactB,    // closed-form B when only B trains; gradient steps on A
};

struct LocalTrainOptions {
  std::size_t steps = 1;   // Q
  std::size_t epochs = 0;  // when > 0, overrides steps with full passes
  std::size_t batch_size = 0;  // 0 = full batch
  double eta = 0.01;
  double eta_b_scale = 1.0;  // learning rate for B is eta * eta_b_scale
  LocalSolver solver = LocalSolver::kGradient;
};

// Trains a copy of `global.adapter`; the frozen factor is returned bitwise
// unchanged. Minibatches follow a per-epoch shuffle drawn from `rng`.
LoraAdapter local_train(const LocalObjective& objective, const GlobalModel& global,
                        TrainMask mask, const LocalTrainOptions& options, Rng& rng);

// ---------------------------------------------------------------------------
// Tasks

class FederatedTask {
 public:
  virtual ~FederatedTask() = default;
  virtual std::size_t num_clients() const = 0;
  virtual std::size_t dim() const = 0;
  // Objective of `client` during `round`. `data_rng` is private to the pair.
  virtual std::shared_ptr<const LocalObjective> client_objective(std::size_t client,
                                                                 std::size_t round,
                                                                 Rng& data_rng) const = 0;
  virtual double global_loss(const GlobalModel& model) const = 0;
  virtual std::optional<double> test_accuracy(const GlobalModel&) const { return std::nullopt; }
  // Ground-truth direction for rank-1 linear tasks.
  virtual std::optional<Vec> a_star() const { return std::nullopt; }
};

// Global loss is the population loss (1/N) sum_i ||a* b_i*^T - W||_F^2.
class LinearFederatedTask final : public FederatedTask {
 public:
  // Finite-sample designs are drawn once from `data_seed`, or afresh every
  // round when `resample_each_round` is set.
  LinearFederatedTask(LinearTask task, std::uint64_t data_seed, bool resample_each_round = false);
  const LinearTask& task() const noexcept { return task_; }
  std::size_t num_clients() const override { return task_.num_clients(); }
  std::size_t dim() const override { return task_.d; }
  std::shared_ptr<const LocalObjective> client_objective(std::size_t client, std::size_t round,
                                                         Rng& data_rng) const override;
  double global_loss(const GlobalModel& model) const override;
  std::optional<Vec> a_star() const override { return task_.a_star; }

 private:
  LinearTask task_;
  bool resample_;
  std::vector<std::shared_ptr<const LocalObjective>> fixed_;
};

// Two-layer ReLU classifier with a shared frozen W_out. Global loss is the
// pooled training cross-entropy; accuracy is measured on `test`.
class ClassifierFederatedTask final : public FederatedTask {
 public:
  ClassifierFederatedTask(std::vector<LabeledShard> shards, LabeledShard test, Mat w_out);
  std::size_t num_clients() const override { return clients_.size(); }
  std::size_t dim() const override { return w_out_.rows(); }
  std::shared_ptr<const LocalObjective> client_objective(std::size_t client, std::size_t round,
                                                         Rng& data_rng) const override;
  double global_loss(const GlobalModel& model) const override;
  std::optional<double> test_accuracy(const GlobalModel& model) const override;
  const Mat& w_out() const noexcept { return w_out_; }

 private:
  std::vector<std::shared_ptr<const ClassifierObjective>> clients_;
  LabeledShard test_;
  Mat w_out_;
};

// Seeded W_out with N(0, 1/d) entries.
Mat make_output_layer(std::size_t d, std::size_t classes, Rng& rng);

// ---------------------------------------------------------------------------
// Round engine

struct FedConfig {
  std::size_t rounds = 1;  // T
  std::size_t rank = 1;
  LocalTrainOptions local;
  StrategyKind strategy = StrategyKind::kRoLoRA;
  std::optional<UpdateSchedule> schedule;  // default_schedule(strategy) when unset
  InitSpec init;  // init.seed is ignored; the adapter seed derives from `seed`
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool record_timing = false;

  UpdateSchedule effective_schedule() const;
  // Throws BadSpec.
  void validate() const;
};

struct RoundRecord {
  std::size_t round = 0;
  TrainMask trained = TrainMask::kTrainB;
  double global_loss = 0.0;
  std::optional<double> angle_distance;
  std::optional<double> test_accuracy;
  std::optional<double> elapsed_ms;
  // ||agg - mean_i(alpha A_i B_i)||_F relative to ||mean|| (absolute if the
  // mean is zero). Not exported.
  double aggregation_residual = 0.0;
  bool operator==(const RoundRecord&) const = default;
};

struct TrainingTrace {
  std::vector<RoundRecord> records;
  GlobalModel final_model;
  bool operator==(const TrainingTrace&) const = default;
};

// Loss above this (or non-finite) aborts with DivergenceDetected.
inline constexpr double kDivergenceThreshold = 1e8;

TrainingTrace run_federated(const FedConfig& config, const FederatedTask& task);

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kTraceCsvHeader =
    "round,trained_factor,global_loss,angle_distance,test_accuracy,elapsed_ms";

// Shortest round-trip decimal form.
std::string format_double(double value);
void write_trace_csv(std::ostream& out, const TrainingTrace& trace);

}  // namespace fedlora

#endif  // FEDLORA_FED_HPP_
