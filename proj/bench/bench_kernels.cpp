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

// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "fedlora/fed.hpp"
#include "fedlora/linalg.hpp"
#include "fedlora/rng.hpp"

namespace {

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fedlora::Rng rng(1);
  const fedlora::Mat a = fedlora::gaussian_matrix(rng, n, n);
  const fedlora::Mat b = fedlora::gaussian_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::matmul_serial(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fedlora::Rng rng(1);
  const fedlora::Mat a = fedlora::gaussian_matrix(rng, n, n);
  const fedlora::Mat b = fedlora::gaussian_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// One RoLoRA run on the cluster task; range(0) is the client worker count.
void BM_RoundEngine(benchmark::State& state) {
  fedlora::ClusterSpec spec;
  spec.dim = 64;
  spec.train_per_class = 100;
  spec.test_per_class = 20;
  fedlora::Rng rng(7);
  auto data = fedlora::make_cluster_dataset(spec, rng);
  auto shards = fedlora::split_by_label(data.train, 10, 1);
  fedlora::ClassifierFederatedTask task(std::move(shards), std::move(data.test),
                                        fedlora::make_output_layer(64, 10, rng));
  fedlora::FedConfig cfg;
  cfg.rounds = 4;
  cfg.rank = 8;
  cfg.local.steps = 5;
  cfg.local.batch_size = 32;
  cfg.local.eta = 0.1;
  cfg.workers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::run_federated(cfg, task));
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulParallel)->Arg(64)->Arg(256);
BENCHMARK(BM_RoundEngine)->Arg(1)->Arg(4);
BENCHMARK_MAIN();
