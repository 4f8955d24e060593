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

#include <chrono>
#include <cmath>
#include <exception>
#include <string>

#include <omp.h>

#include "fedlora/error.hpp"
#include "fedlora/fed.hpp"
#include "fedlora/svd.hpp"

namespace fedlora {
namespace {

// Stream tags for Rng::derive; client streams use (seed, client, round).
constexpr std::uint64_t kInitStream = ~std::uint64_t{0};
constexpr std::uint64_t kDataSalt = 0x5eedda7aULL;

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::optional<double> rank1_angle(const GlobalModel& model, const Vec& a_star) {
  Vec u;
  if (model.base.empty() && model.adapter.rank() == 1) {
    u = model.adapter.A.col_vec(0);
  } else {
    const Mat w = model.effective_weight();
    if (frob_norm(w) <= kZeroTolerance) return std::nullopt;
    u = truncated_svd(w, 1).U.col_vec(0);
  }
  if (norm(u) <= kZeroTolerance) return std::nullopt;
  return angle_distance(a_star, unit_normalize(u));
}

}  // namespace

LoraAdapter local_train(const LocalObjective& objective, const GlobalModel& global,
                        TrainMask mask, const LocalTrainOptions& options, Rng& rng) {
  GlobalModel model = global;
  LoraAdapter& ad = model.adapter;
  if (options.solver == LocalSolver::kExactB && mask == TrainMask::kTrainB &&
      objective.has_exact_b()) {
    ad.B = objective.exact_b(model);
    return ad;
  }

  const std::size_t n = objective.num_samples();
  const bool full_batch = n == 0 || options.batch_size == 0 || options.batch_size >= n;
  std::size_t steps = options.steps;
  if (options.epochs > 0) {
    const std::size_t per_epoch = full_batch ? 1 : (n + options.batch_size - 1) / options.batch_size;
    steps = options.epochs * per_epoch;
  }

  std::vector<std::size_t> order;
  std::size_t pos = 0;
  if (!full_batch) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
  }
  const double eta_b = options.eta * options.eta_b_scale;
  for (std::size_t step = 0; step < steps; ++step) {
    std::span<const std::size_t> rows;
    if (!full_batch) {
      if (pos >= n) {
        shuffle(order, rng);
        pos = 0;
      }
      const std::size_t len = std::min(options.batch_size, n - pos);
      rows = std::span<const std::size_t>(order).subspan(pos, len);
      pos += len;
    }
    const FactorGrads g = objective.gradient(model, mask, rows);
    if (g.dA) ad.A -= options.eta * *g.dA;
    if (g.dB) ad.B -= eta_b * *g.dB;
  }
  return ad;
}

// --- tasks -----------------------------------------------------------------

LinearFederatedTask::LinearFederatedTask(LinearTask task, std::uint64_t data_seed,
                                         bool resample_each_round)
    : task_(std::move(task)), resample_(resample_each_round) {
  task_.validate();
  for (std::size_t i = 0; i < task_.num_clients(); ++i) {
    if (task_.mode == SampleMode::kPopulation) {
      fixed_.push_back(std::make_shared<LinearObjective>(population_shard(task_, i)));
    } else if (!resample_) {
      Rng rng = Rng::derive(data_seed, i);
      fixed_.push_back(std::make_shared<LinearObjective>(gen_linear_shard(task_, i, rng)));
    }
  }
}

std::shared_ptr<const LocalObjective> LinearFederatedTask::client_objective(
    std::size_t client, std::size_t, Rng& data_rng) const {
  if (!fixed_.empty()) return fixed_.at(client);
  return std::make_shared<LinearObjective>(gen_linear_shard(task_, client, data_rng));
}

double LinearFederatedTask::global_loss(const GlobalModel& model) const {
  const Mat w = model.effective_weight();
  double total = 0.0;
  for (const Vec& b : task_.b_stars) {
    const double f = frob_norm(outer(task_.a_star, b) - w);
    total += f * f;
  }
  return total / static_cast<double>(task_.num_clients());
}

ClassifierFederatedTask::ClassifierFederatedTask(std::vector<LabeledShard> shards,
                                                 LabeledShard test, Mat w_out)
    : test_(std::move(test)), w_out_(std::move(w_out)) {
  if (shards.empty()) throw Error(ErrorKind::kBadSpec, "no client shards");
  for (auto& s : shards) {
    if (s.features.cols() != w_out_.rows() || s.num_classes != w_out_.cols())
      throw Error(ErrorKind::kShapeMismatch, "client shard does not match W_out");
    clients_.push_back(std::make_shared<ClassifierObjective>(w_out_, std::move(s)));
  }
}

std::shared_ptr<const LocalObjective> ClassifierFederatedTask::client_objective(
    std::size_t client, std::size_t, Rng&) const {
  return clients_.at(client);
}

double ClassifierFederatedTask::global_loss(const GlobalModel& model) const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& c : clients_) {
    const std::size_t n = c->num_samples();
    if (n == 0) continue;
    total += c->loss(model) * static_cast<double>(n);
    count += n;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::optional<double> ClassifierFederatedTask::test_accuracy(const GlobalModel& model) const {
  if (test_.size() == 0) return std::nullopt;
  TwoLayerNet net{w_out_, model.adapter, model.base};
  return accuracy(net, test_);
}

Mat make_output_layer(std::size_t d, std::size_t classes, Rng& rng) {
  Mat w = gaussian_matrix(rng, d, classes);
  w *= 1.0 / std::sqrt(static_cast<double>(d));
  return w;
}

// --- round engine ----------------------------------------------------------

UpdateSchedule FedConfig::effective_schedule() const {
  return schedule ? *schedule : default_schedule(strategy);
}

void FedConfig::validate() const {
  if (rank == 0) throw Error(ErrorKind::kBadSpec, "rank must be >= 1");
  if (workers == 0) throw Error(ErrorKind::kBadSpec, "workers must be >= 1");
  if (!(local.eta > 0.0) || !std::isfinite(local.eta))
    throw Error(ErrorKind::kBadSpec, "eta must be positive");
  if (!(local.eta_b_scale > 0.0)) throw Error(ErrorKind::kBadSpec, "eta_b_scale must be positive");
  validate_schedule(strategy, effective_schedule());
}

TrainingTrace run_federated(const FedConfig& config, const FederatedTask& task) {
  config.validate();
  const UpdateSchedule schedule = config.effective_schedule();
  const std::size_t n_clients = task.num_clients();
  if (n_clients == 0) throw Error(ErrorKind::kBadSpec, "task has no clients");
  const std::optional<Vec> a_star = task.a_star();

  InitSpec init = config.init;
  init.seed = Rng::derive(config.seed, kInitStream, 0).next_u64();
  TrainingTrace trace;
  GlobalModel& global = trace.final_model;
  global.adapter = init_adapter(init, task.dim(), config.rank);

  const bool alternating =
      config.strategy == StrategyKind::kRoLoRA || config.strategy == StrategyKind::kFfaLoRA;
  const std::uint64_t data_seed = mix64(config.seed ^ kDataSalt);
  const int workers = static_cast<int>(config.workers);

  for (std::size_t t = 0; t < config.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const TrainMask mask = schedule.mask(t);
    std::vector<LoraAdapter> locals(n_clients);
    std::vector<std::exception_ptr> errors(n_clients);

    // Clients write only their own slot; the global model is read-only here.
#pragma omp parallel for num_threads(workers) schedule(static) if (workers > 1)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_clients); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        Rng data_rng = Rng::derive(data_seed, i, t);
        const auto objective = task.client_objective(i, t, data_rng);
        Rng rng = Rng::derive(config.seed, i, t);
        locals[i] = local_train(*objective, global, mask, config.local, rng);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    if (alternating) {
      for (std::size_t i = 0; i < n_clients; ++i) {
        const bool same = mask == TrainMask::kTrainB ? locals[i].A == global.adapter.A
                                                     : locals[i].B == global.adapter.B;
        if (!same) {
          throw Error(ErrorKind::kFrozenFactorMismatch,
                      "client " + std::to_string(i) + " changed its frozen factor in round " +
                          std::to_string(t));
        }
      }
    }

    Mat mean = effective_update(locals.front());
    for (std::size_t i = 1; i < n_clients; ++i) mean += effective_update(locals[i]);
    mean *= 1.0 / static_cast<double>(n_clients);

    LoraAdapter agg;
    switch (config.strategy) {
      case StrategyKind::kRoLoRA:
      case StrategyKind::kFfaLoRA: agg = aggregate_rolora(locals, mask); break;
      case StrategyKind::kFedAvgLoRA: agg = aggregate_fedavg(locals); break;
      case StrategyKind::kFlexLoRA: agg = aggregate_flexlora(locals, config.rank); break;
      case StrategyKind::kFLoRA: agg = aggregate_flora(locals); break;
    }

    RoundRecord rec;
    rec.round = t + 1;
    rec.trained = mask;
    const double mean_norm = frob_norm(mean);
    rec.aggregation_residual =
        frob_norm(effective_update(agg) - mean) / (mean_norm > 0.0 ? mean_norm : 1.0);

    if (config.strategy == StrategyKind::kFLoRA) {
      // The stacked product goes into the frozen base and clients restart
      // from a fresh rank-r adapter, so the exchanged rank does not compound.
      // The base absorbs the fresh product too: the served weight is exactly
      // base + aggregate.
      InitSpec fresh = config.init;
      if (fresh.a_init == InitSpec::AInit::kGiven) fresh.a_init = InitSpec::AInit::kGaussian;
      if (fresh.b_init == InitSpec::BInit::kGiven) fresh.b_init = InitSpec::BInit::kZero;
      fresh.seed = Rng::derive(config.seed, kInitStream, t + 1).next_u64();
      LoraAdapter next = init_adapter(fresh, task.dim(), config.rank);
      Mat shift = effective_update(agg) - effective_update(next);
      if (global.base.empty()) {
        global.base = std::move(shift);
      } else {
        global.base += shift;
      }
      global.adapter = std::move(next);
    } else {
      global.adapter = std::move(agg);
    }

    rec.global_loss = task.global_loss(global);
    if (!std::isfinite(rec.global_loss) || rec.global_loss > kDivergenceThreshold) {
      throw Error(ErrorKind::kDivergenceDetected,
                  "global loss " + format_double(rec.global_loss) + " in round " +
                      std::to_string(t + 1));
    }
    if (a_star) rec.angle_distance = rank1_angle(global, *a_star);
    rec.test_accuracy = task.test_accuracy(global);
    if (config.record_timing) {
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    }
    trace.records.push_back(rec);
  }
  return trace;
}

}  // namespace fedlora
