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

#include <algorithm>
#include <cctype>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedlora/error.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/theory.hpp"

namespace fedlora {
namespace {

constexpr std::uint64_t kTaskStream = 0x7a5c;

struct RunSpec {
  std::string label;
  std::uint64_t seed = 0;
  std::function<std::string(std::size_t inner_workers)> body;  // returns CSV text
};

std::string file_stem(const std::string& label, std::uint64_t seed) {
  std::string out;
  for (char c : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += keep ? c : '_';
  }
  return out + "_seed" + std::to_string(seed);
}

std::string trace_text(const TrainingTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

std::string theory_text(const std::vector<TheoryRow>& rows) {
  std::ostringstream os;
  write_theory_csv(os, rows);
  return os.str();
}

std::vector<LabeledShard> partition_shards(const ExperimentConfig& c, const LabeledShard& train,
                                           Rng& rng) {
  if (c.partition == "label") return split_by_label(train, c.clients, c.labels_per_client);
  if (c.partition == "dirichlet") return split_dirichlet(train, c.clients, c.dirichlet_alpha, rng);
  // iid: a shuffled permutation cut into near-equal contiguous chunks.
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<LabeledShard> out;
  for (std::size_t k = 0; k < c.clients; ++k) {
    const std::size_t lo = k * order.size() / c.clients;
    const std::size_t hi = (k + 1) * order.size() / c.clients;
    out.push_back(take_rows(train, std::span<const std::size_t>(order).subspan(lo, hi - lo)));
  }
  return out;
}

std::string delta_label(const std::string& base, double delta0) {
  return base + "_d0=" + format_double(delta0);
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIoError:
    case ErrorKind::kSchemaMismatch: return kExitIo;
    case ErrorKind::kDivergenceDetected:
    case ErrorKind::kDegenerateDesign:
    case ErrorKind::kZeroVector: return kExitDivergence;
    default: return kExitConfig;
  }
}

std::unique_ptr<FederatedTask> build_task(const ExperimentConfig& c, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kTaskStream);
  const bool classifier = c.kind == ExperimentKind::kNonlinearToy || c.task == "classifier";
  if (!classifier) {
    LinearTask task = c.gamma > 0.0
                          ? make_heterogeneous_task(c.d, c.m, c.clients, c.b_norm, c.gamma, c.mode, rng)
                          : make_homogeneous_task(c.d, c.m, c.clients, c.b_norm, c.mode, rng);
    return std::make_unique<LinearFederatedTask>(std::move(task), rng.next_u64(), c.resample);
  }
  LabeledShard train, test;
  if (c.dataset == "idx") {
    train = read_idx_dataset(c.idx_train_images, c.idx_train_labels);
    if (!c.idx_test_images.empty()) test = read_idx_dataset(c.idx_test_images, c.idx_test_labels);
    test.num_classes = train.num_classes;
  } else {
    ClusterSpec spec = c.clusters;
    spec.dim = c.d;
    ClassificationData data = make_cluster_dataset(spec, rng);
    train = std::move(data.train);
    test = std::move(data.test);
  }
  auto shards = partition_shards(c, train, rng);
  Mat w_out = make_output_layer(train.features.cols(), train.num_classes, rng);
  return std::make_unique<ClassifierFederatedTask>(std::move(shards), std::move(test),
                                                   std::move(w_out));
}

FedConfig build_fed_config(const ExperimentConfig& c, StrategyKind strategy, std::uint64_t seed) {
  FedConfig f;
  f.rounds = c.rounds;
  f.rank = c.rank;
  f.local.steps = c.local_steps;
  f.local.epochs = c.local_epochs;
  f.local.batch_size = c.batch_size;
  f.local.eta = c.eta;
  f.local.eta_b_scale = c.eta_b_scale;
  f.local.solver = c.solver;
  f.strategy = strategy;
  f.init.a_init = InitSpec::AInit::kGaussian;
  f.init.a_std = c.a_std;
  f.init.b_init = c.b_init == "gaussian" ? InitSpec::BInit::kGaussian : InitSpec::BInit::kZero;
  f.init.b_std = c.b_std;
  f.init.alpha = c.alpha;
  f.seed = seed;
  f.workers = c.workers;
  f.record_timing = c.timing;
  return f;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  ExperimentOutcome outcome;
  try {
    validate(config);
    const ExperimentConfig& c = config;
    std::vector<RunSpec> runs;

    auto add_fed_run = [&](std::string label, std::uint64_t seed, FedConfig fed) {
      runs.push_back({std::move(label), seed, [&c, seed, fed](std::size_t inner) mutable {
                        fed.workers = inner;
                        const auto task = build_task(c, seed);
                        return trace_text(run_federated(fed, *task));
                      }});
    };

    for (std::uint64_t seed : c.seeds) {
      switch (c.kind) {
        case ExperimentKind::kCompareProtocols:
        case ExperimentKind::kNonlinearToy:
          for (StrategyKind s : c.strategies)
            add_fed_run(std::string(to_string(s)), seed, build_fed_config(c, s, seed));
          break;
        case ExperimentKind::kAblationSchedule:
          for (StrategyKind s : c.strategies)
            for (const std::string& sched : c.schedules) {
              FedConfig fed = build_fed_config(c, s, seed);
              fed.schedule = parse_schedule_spec(sched);
              // Commas would split the label across CSV columns.
              std::string tag = sched;
              std::replace(tag.begin(), tag.end(), ',', '/');
              add_fed_run(std::string(to_string(s)) + "[" + tag + "]", seed, fed);
            }
          break;
        case ExperimentKind::kAblationLocalSteps:
          for (StrategyKind s : c.strategies)
            for (std::size_t q : c.local_steps_sweep) {
              FedConfig fed = build_fed_config(c, s, seed);
              fed.local.steps = q;
              if (c.step_budget > 0) fed.rounds = c.step_budget / q;
              add_fed_run(std::string(to_string(s)) + "_Q" + std::to_string(q), seed, fed);
            }
          break;
        case ExperimentKind::kTheoryHomog:
          for (double d0 : c.delta0) {
            runs.push_back({delta_label("Alt-min-GD", d0), seed, [&c, seed, d0](std::size_t) {
                              Rng rng = Rng::derive(seed, kTaskStream);
                              const LinearTask task = make_homogeneous_task(
                                  c.d, c.m, c.clients, c.b_norm, SampleMode::kFiniteSample, rng);
                              const Vec a0 = init_with_angle(task.a_star, d0, rng);
                              AltMinOptions opt;
                              opt.eta = c.eta_scale / (c.b_norm * c.b_norm);
                              opt.iterations = c.iterations;
                              opt.fresh_samples = c.fresh_samples;
                              return theory_text(contraction_rows(altmin_gd(task, a0, opt, rng)));
                            }});
          }
          break;
        case ExperimentKind::kTheoryHeter:
          for (double d0 : c.delta0) {
            runs.push_back({delta_label("Alt-min-GD", d0), seed, [&c, seed, d0](std::size_t) {
                              Rng rng = Rng::derive(seed, kTaskStream);
                              const LinearTask task = make_heterogeneous_task(
                                  c.d, 0, c.clients, c.b_norm, c.gamma, SampleMode::kPopulation, rng);
                              const Vec a0 = init_with_angle(task.a_star, d0, rng);
                              const double l = task_l_max(task);
                              AltMinOptions opt;
                              opt.eta = c.eta_scale / (2.0 * l * l);
                              opt.iterations = c.iterations;
                              const auto rep = altmin_gd(task, a0, opt, rng);
                              const double bb = norm(task.b_bar_star());
                              const double factor = 1.0 - 2.0 * opt.eta * (1.0 - d0 * d0) * bb * bb;
                              const double ffa = ffa_heter_loss_exact(task, a0);
                              auto rows = contraction_rows(rep);
                              for (auto& r : rows) {
                                r.bound = factor;
                                r.predicted_loss = ffa;
                              }
                              return theory_text(rows);
                            }});
          }
          break;
        case ExperimentKind::kFfaMonteCarlo:
          for (double d0 : c.delta0) {
            runs.push_back({delta_label("FFA-LoRA", d0), seed, [&c, seed, d0](std::size_t inner) {
                              Rng rng = Rng::derive(seed, kTaskStream);
                              const LinearTask task = make_homogeneous_task(
                                  c.d, c.m, c.clients, c.b_norm, SampleMode::kFiniteSample, rng);
                              const Vec a0 = init_with_angle(task.a_star, d0, rng);
                              const auto est = ffa_homog_empirical_loss(task, a0, c.trials, rng, inner);
                              const auto pred = ffa_homog_predicted_loss(c.clients, c.m, d0, c.b_norm);
                              TheoryRow row;
                              row.round = 1;
                              row.trained_factor = "B";
                              row.global_loss = est.mean;
                              row.angle_distance = d0;
                              row.predicted_loss = pred.predicted;
                              row.empirical_loss = est.mean;
                              row.std_err = est.std_err;
                              return theory_text({row});
                            }});
          }
          break;
      }
    }

    std::error_code ec;
    const std::filesystem::path dir = c.output_dir;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
      throw Error(ErrorKind::kIoError, "cannot create output directory " + dir.string());

    // Fan out over runs when there are enough of them; otherwise give the
    // workers to each run. Results do not depend on the split.
    const std::size_t outer = std::min(c.workers, runs.size());
    const std::size_t inner = outer > 1 ? 1 : c.workers;
    std::vector<std::string> texts(runs.size());
    std::vector<std::exception_ptr> errors(runs.size());
    const int threads = static_cast<int>(std::max<std::size_t>(outer, 1));
#pragma omp parallel for num_threads(threads) schedule(dynamic) if (threads > 1)
    for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(runs.size()); ++kk) {
      const auto k = static_cast<std::size_t>(kk);
      try {
        texts[k] = runs[k].body(inner);
        const auto path = dir / (file_stem(runs[k].label, runs[k].seed) + ".csv");
        std::ofstream out(path, std::ios::binary);
        out << texts[k];
        if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    std::vector<LabeledTrace> traces;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      outcome.files.push_back(dir / (file_stem(runs[k].label, runs[k].seed) + ".csv"));
      std::istringstream in(texts[k]);
      traces.push_back({runs[k].label, read_csv(in)});
    }
    outcome.summary = summarize(traces);
    const auto summary_path = dir / "summary.csv";
    std::ofstream out(summary_path, std::ios::binary);
    write_summary_csv(out, outcome.summary);
    if (!out) throw Error(ErrorKind::kIoError, "cannot write " + summary_path.string());
    outcome.files.push_back(summary_path);
    outcome.message = "wrote " + std::to_string(outcome.files.size()) + " files to " + dir.string();
  } catch (const Error& e) {
    outcome.exit_code = exit_code_for(e.kind());
    outcome.message = e.what();
  }
  return outcome;
}

}  // namespace fedlora
