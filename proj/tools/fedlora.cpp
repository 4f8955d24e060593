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

// fedlora: run federated LoRA experiments from a config file, or check the
// closed-form theory.
//
//   fedlora run <config> [--out DIR] [--seeds 1,2,3] [--workers K]
//   fedlora verify [--seed S]

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedlora/error.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/theory.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  fedlora::ExperimentConfig cfg;
  try {
    cfg = fedlora::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (!seeds.empty()) cfg.seeds = seeds;
    if (workers > 0) cfg.workers = workers;
    fedlora::validate(cfg);
  } catch (const fedlora::Error& e) {
    std::cerr << "fedlora: " << e.what() << '\n';
    return e.kind() == fedlora::ErrorKind::kIoError ? fedlora::kExitIo : fedlora::kExitConfig;
  }
  const fedlora::ExperimentOutcome outcome = fedlora::run_experiment(cfg);
  if (outcome.exit_code != fedlora::kExitOk) {
    std::cerr << "fedlora: " << outcome.message << '\n';
    return outcome.exit_code;
  }
  std::cout << outcome.message << '\n';
  fedlora::write_summary_csv(std::cout, outcome.summary);
  return fedlora::kExitOk;
}

int cmd_verify(std::uint64_t seed) {
  int failed = 0;
  for (const auto& r : fedlora::run_theory_checks(seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " -- " << r.detail << '\n';
    failed += r.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated LoRA simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--seeds", seeds, "Comma-separated seed list")->delimiter(',');
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "Check the closed-form theory");
  verify->add_option("--seed", verify_seed, "Seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fedlora::kExitConfig;
  }
  if (*run) return cmd_run(config_path, out_dir, seeds, workers);
  return cmd_verify(verify_seed);
}
