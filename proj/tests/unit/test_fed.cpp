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

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fedlora/error.hpp"
#include "fedlora/fed.hpp"
#include "fedlora/svd.hpp"
#include "oracles.hpp"

using namespace fedlora;

namespace {

std::vector<LoraAdapter> random_locals(Rng& rng, std::size_t n, std::size_t d, std::size_t r) {
  std::vector<LoraAdapter> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({gaussian_matrix(rng, d, r), gaussian_matrix(rng, r, d), 1.0});
  return out;
}

Mat mean_product(const std::vector<LoraAdapter>& locals) {
  Mat m = effective_update(locals[0]);
  for (std::size_t i = 1; i < locals.size(); ++i) m += effective_update(locals[i]);
  return (1.0 / static_cast<double>(locals.size())) * m;
}

LinearFederatedTask linear_fed_task(std::uint64_t seed, SampleMode mode, std::size_t m = 200) {
  Rng rng(seed);
  return LinearFederatedTask(make_homogeneous_task(10, m, 5, 1.0, mode, rng), seed);
}

ClassifierFederatedTask small_classifier(std::uint64_t seed) {
  Rng rng(seed);
  ClusterSpec spec;
  spec.dim = 16;
  spec.train_per_class = 20;
  spec.test_per_class = 10;
  spec.signal_dim = 4;
  const ClassificationData data = make_cluster_dataset(spec, rng);
  return ClassifierFederatedTask(split_by_label(data.train, 5, 2), data.test,
                                 make_output_layer(16, 10, rng));
}

FedConfig classifier_config(StrategyKind s) {
  FedConfig cfg;
  cfg.rounds = 6;
  cfg.rank = 2;
  cfg.strategy = s;
  cfg.local.eta = 0.1;
  cfg.local.epochs = 1;
  cfg.local.batch_size = 8;
  cfg.init.b_init = InitSpec::BInit::kGaussian;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("aggregate_rolora") {
  Rng rng(1);
  auto single = random_locals(rng, 1, 6, 2);
  CHECK(aggregate_rolora(single, TrainMask::kTrainB) == single[0]);

  auto locals = random_locals(rng, 4, 6, 2);
  for (auto& l : locals) l.A = locals[0].A;
  const LoraAdapter agg = aggregate_rolora(locals, TrainMask::kTrainB);
  CHECK(agg.A == locals[0].A);
  CHECK(oracle::rel_err(effective_update(agg), mean_product(locals)) <= 1e-12);

  auto shared_b = random_locals(rng, 3, 6, 2);
  for (auto& l : shared_b) l.B = shared_b[0].B;
  CHECK(oracle::rel_err(effective_update(aggregate_rolora(shared_b, TrainMask::kTrainA)),
                        mean_product(shared_b)) <= 1e-12);

  locals[2].A(0, 0) += 1e-9;
  try {
    (void)aggregate_rolora(locals, TrainMask::kTrainB);
    FAIL("expected FrozenFactorMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFrozenFactorMismatch);
  }
  CHECK_THROWS_AS((void)aggregate_rolora(locals, TrainMask::kTrainBoth), Error);
}

TEST_CASE("aggregate_fedavg and interference") {
  Rng rng(2);
  auto locals = random_locals(rng, 3, 5, 2);
  const std::vector<LoraAdapter> same(3, locals[0]);
  CHECK(aggregate_fedavg(same) == locals[0]);
  CHECK(interference_gap(same) == 0.0);
  CHECK(interference_gap(std::vector<LoraAdapter>{locals[1]}) == 0.0);
  CHECK(interference_gap(locals) > 0.0);

  // A_1 B_1 = e1 e1^T, A_2 B_2 = e2 e2^T: the gap is 1/2.
  const Vec e1 = Vec::basis(3, 0), e2 = Vec::basis(3, 1);
  const std::vector<LoraAdapter> pair = {{Mat::column(e1), Mat::row(e1), 1.0},
                                         {Mat::column(e2), Mat::row(e2), 1.0}};
  CHECK(std::abs(interference_gap(pair) - 0.5) <= 1e-15);

  auto mismatched = locals;
  mismatched[1].A = Mat(5, 3);
  CHECK_THROWS_AS((void)aggregate_fedavg(mismatched), Error);
}

TEST_CASE("aggregate_flexlora") {
  Rng rng(3);
  auto shared = random_locals(rng, 4, 8, 2);
  for (auto& l : shared) l.A = shared[0].A;
  CHECK(oracle::rel_err(effective_update(aggregate_flexlora(shared, 2)), mean_product(shared)) <=
        1e-8);

  auto one = random_locals(rng, 1, 8, 3);
  CHECK(oracle::rel_err(effective_update(aggregate_flexlora(one, 3)), effective_update(one[0])) <=
        1e-8);

  for (int k = 0; k < 5; ++k) {
    auto locals = random_locals(rng, 4, 8, 2);
    const Mat m = mean_product(locals);
    const LoraAdapter agg = aggregate_flexlora(locals, 1);
    CHECK(agg.rank() == 1);
    CHECK(std::abs(frob_norm(m - effective_update(agg)) - oracle::tail_energy(m, 1)) <= 1e-8);
  }
  CHECK_THROWS_AS((void)aggregate_flexlora(one, 9), Error);
}

TEST_CASE("aggregate_flora") {
  Rng rng(4);
  auto one = random_locals(rng, 1, 6, 2);
  CHECK(max_abs_diff(effective_update(aggregate_flora(one)), effective_update(one[0])) <= 1e-15);
  auto locals = random_locals(rng, 5, 12, 2);
  const LoraAdapter agg = aggregate_flora(locals);
  CHECK(agg.rank() == 10);
  CHECK(oracle::rel_err(effective_update(agg), mean_product(locals)) <= 1e-12);
  const auto sv = oracle::singular_values(effective_update(agg));
  CHECK(sv(10) <= 1e-10 * sv(0));
}

TEST_CASE("local_train") {
  const LinearFederatedTask task = linear_fed_task(5, SampleMode::kFiniteSample);
  Rng data(1);
  const auto obj = task.client_objective(0, 0, data);
  Rng rng(9);
  GlobalModel g{Mat(), {Mat::column(random_unit_vector(rng, 10)), Mat::row(gaussian_vector(rng, 10)),
                        1.0}};

  LocalTrainOptions opt;
  opt.steps = 0;
  CHECK(local_train(*obj, g, TrainMask::kTrainA, opt, rng) == g.adapter);

  opt.steps = 3;
  const LoraAdapter b_only = local_train(*obj, g, TrainMask::kTrainB, opt, rng);
  CHECK(b_only.A == g.adapter.A);
  CHECK(!(b_only.B == g.adapter.B));

  opt.steps = 1;
  opt.eta = 0.05;
  const LoraAdapter one = local_train(*obj, g, TrainMask::kTrainA, opt, rng);
  const auto& shard = dynamic_cast<const LinearObjective&>(*obj).shard();
  const Vec expected = g.adapter.A.col_vec(0) -
                       0.05 * grad_a_linear(shard, g.adapter.A.col_vec(0), g.adapter.B.row_vec(0));
  CHECK(max_abs_diff(one.A, Mat::column(expected)) <= 1e-14);
  CHECK(one.B == g.adapter.B);

  opt.solver = LocalSolver::kExactB;
  const LoraAdapter exact = local_train(*obj, g, TrainMask::kTrainB, opt, rng);
  CHECK(max_abs_diff(exact.B, Mat::row(solve_b_exact(shard, g.adapter.A.col_vec(0)))) <= 1e-10);

  // Minibatches: the same rng seed gives the same result.
  const ClassifierFederatedTask cls = small_classifier(3);
  const auto cobj = cls.client_objective(1, 0, data);
  GlobalModel cg{Mat(), {gaussian_matrix(rng, 16, 2), gaussian_matrix(rng, 2, 16), 1.0}};
  LocalTrainOptions mb;
  mb.epochs = 2;
  mb.batch_size = 7;
  mb.eta = 0.1;
  Rng r1(4), r2(4);
  CHECK(local_train(*cobj, cg, TrainMask::kTrainBoth, mb, r1) ==
        local_train(*cobj, cg, TrainMask::kTrainBoth, mb, r2));
}

TEST_CASE("run_federated basics") {
  const LinearFederatedTask task = linear_fed_task(6, SampleMode::kFiniteSample);
  FedConfig cfg;
  cfg.rounds = 0;
  const TrainingTrace empty = run_federated(cfg, task);
  CHECK(empty.records.empty());
  InitSpec init = cfg.init;
  init.seed = Rng::derive(cfg.seed, ~std::uint64_t{0}, 0).next_u64();
  CHECK(empty.final_model.adapter == init_adapter(init, 10, 1));

  cfg.rounds = 4;
  cfg.strategy = StrategyKind::kFedAvgLoRA;
  cfg.schedule = UpdateSchedule::alternating();
  CHECK_THROWS_AS((void)run_federated(cfg, task), Error);

  cfg.strategy = StrategyKind::kRoLoRA;
  cfg.schedule.reset();
  cfg.local.eta = 1e6;
  cfg.local.steps = 5;
  try {
    (void)run_federated(cfg, task);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergenceDetected);
  }
}

TEST_CASE("run_federated is deterministic across worker counts") {
  const ClassifierFederatedTask task = small_classifier(7);
  for (StrategyKind s : {StrategyKind::kRoLoRA, StrategyKind::kFfaLoRA, StrategyKind::kFedAvgLoRA,
                         StrategyKind::kFlexLoRA, StrategyKind::kFLoRA}) {
    FedConfig cfg = classifier_config(s);
    cfg.workers = 1;
    const TrainingTrace serial = run_federated(cfg, task);
    cfg.workers = 8;
    const TrainingTrace parallel = run_federated(cfg, task);
    CHECK(serial == parallel);
    CHECK(serial.records.size() == 6);
    std::ostringstream a, b;
    write_trace_csv(a, serial);
    write_trace_csv(b, parallel);
    CHECK(a.str() == b.str());
    // FedAvgLoRA and FlexLoRA are inexact by construction.
    if (s == StrategyKind::kFedAvgLoRA || s == StrategyKind::kFlexLoRA) continue;
    for (const auto& r : serial.records) CHECK(r.aggregation_residual <= 1e-12);
  }
}

TEST_CASE("FFA-LoRA is RoLoRA with a B-only schedule") {
  const ClassifierFederatedTask task = small_classifier(8);
  FedConfig ffa = classifier_config(StrategyKind::kFfaLoRA);
  FedConfig ro = classifier_config(StrategyKind::kRoLoRA);
  ro.schedule = UpdateSchedule::freeze_a();
  const TrainingTrace a = run_federated(ffa, task), b = run_federated(ro, task);
  CHECK(a == b);
  CHECK(a.final_model.adapter.A == run_federated(ffa, task).final_model.adapter.A);
}

TEST_CASE("FLoRA serves base + mean product") {
  const ClassifierFederatedTask task = small_classifier(9);
  FedConfig cfg = classifier_config(StrategyKind::kFLoRA);
  const TrainingTrace t = run_federated(cfg, task);
  CHECK(t.final_model.adapter.rank() == 2);
  CHECK(!t.final_model.base.empty());
  for (const auto& r : t.records) CHECK(r.test_accuracy.has_value());
}

TEST_CASE("RoLoRA with exact B contracts the angle") {
  // The angle can only move on A rounds; B rounds leave A untouched.
  const LinearFederatedTask task = linear_fed_task(10, SampleMode::kFiniteSample, 400);
  FedConfig cfg;
  cfg.rounds = 40;
  cfg.rank = 1;
  cfg.strategy = StrategyKind::kRoLoRA;
  cfg.local.solver = LocalSolver::kExactB;
  cfg.local.eta = 0.25;
  cfg.init.a_init = InitSpec::AInit::kGaussianUnit;
  cfg.seed = 3;
  const TrainingTrace t = run_federated(cfg, task);
  double prev = -1.0;
  std::size_t a_rounds = 0;
  for (const auto& r : t.records) {
    REQUIRE(r.angle_distance.has_value());
    const double cur = *r.angle_distance;
    if (r.trained == TrainMask::kTrainB) {
      if (prev >= 0.0) CHECK(cur == prev);
    } else {
      ++a_rounds;
      if (prev > 1e-12) CHECK(cur < prev);
    }
    prev = cur;
  }
  CHECK(a_rounds == 20);
  CHECK(prev < 1e-3);
}

TEST_CASE("trace CSV") {
  TrainingTrace t;
  RoundRecord r;
  r.round = 1;
  r.trained = TrainMask::kTrainA;
  r.global_loss = 0.1;
  r.angle_distance = 0.25;
  t.records.push_back(r);
  std::ostringstream out;
  write_trace_csv(out, t);
  CHECK(out.str() == std::string(kTraceCsvHeader) + "\n1,A,0.1,0.25,,\n");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}
