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

#include "fedlora/theory.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <string>

#include "fedlora/error.hpp"
#include "fedlora/fed.hpp"

namespace fedlora {
namespace {

// Relative slack on step-size preconditions so that eta = 1/||b||^2
// computed in floating point is accepted.
constexpr double kStepSlack = 1e-12;

void require_unit(const Vec& a, const char* what) {
  if (std::abs(norm(a) - 1.0) > kUnitTolerance)
    throw Error(ErrorKind::kNotUnit, std::string(what) + " must be a unit vector");
}

std::vector<LinearShard> draw_shards(const LinearTask& task, Rng& rng) {
  std::vector<LinearShard> shards;
  shards.reserve(task.num_clients());
  for (std::size_t i = 0; i < task.num_clients(); ++i) {
    shards.push_back(task.mode == SampleMode::kPopulation ? population_shard(task, i)
                                                          : gen_linear_shard(task, i, rng));
  }
  return shards;
}

Vec mean_exact_b(const std::vector<LinearShard>& shards, const Vec& a) {
  Vec b_bar(a.dim());
  for (const LinearShard& s : shards) b_bar += solve_b_exact(s, a);
  b_bar *= 1.0 / static_cast<double>(shards.size());
  return b_bar;
}

}  // namespace

ContractionReport altmin_gd(const LinearTask& task, const Vec& a0, const AltMinOptions& options,
                            Rng& rng) {
  task.validate();
  require_unit(a0, "a0");
  if (a0.dim() != task.d) throw Error(ErrorKind::kShapeMismatch, "a0 has the wrong dimension");
  if (!(options.eta > 0.0)) throw Error(ErrorKind::kBadRange, "eta must be positive");

  ContractionReport report;
  report.slack = options.slack;
  const double delta0 = angle_distance(task.a_star, a0);
  const double b_norm = norm(task.b_bar_star());
  if (delta0 > 0.0 && delta0 < 1.0 &&
      options.eta * b_norm * b_norm <= 1.0 + kStepSlack) {
    report.bound = contraction_bound(delta0, options.eta, b_norm);
  }

  const bool redraw = task.mode == SampleMode::kFiniteSample && options.fresh_samples;
  std::vector<LinearShard> shards = draw_shards(task, rng);
  Vec a = a0;
  report.deltas.push_back(delta0);
  for (std::size_t t = 0; t < options.iterations; ++t) {
    if (options.stop_below && report.deltas.back() <= *options.stop_below) break;
    if (redraw && t > 0) shards = draw_shards(task, rng);
    const Vec b_bar = mean_exact_b(shards, a);
    report.losses.push_back(population_global_loss(task, a, b_bar));
    Vec grad(task.d);
    for (const LinearShard& s : shards) grad += grad_a_linear(s, a, b_bar);
    grad *= 1.0 / static_cast<double>(shards.size());
    a = unit_normalize(a - options.eta * grad);

    const double prev = report.deltas.back();
    const double delta = angle_distance(task.a_star, a);
    if (prev > kAngleFloor) {
      const double ratio = delta / prev;
      report.ratios.push_back(ratio);
      if (report.bound && ratio > *report.bound + options.slack) ++report.violations;
    }
    report.deltas.push_back(delta);
  }
  if (redraw) shards = draw_shards(task, rng);
  report.a_final = a;
  report.b_next = mean_exact_b(shards, a);
  return report;
}

double contraction_bound(double delta0, double eta, double b_star_norm) {
  if (!(delta0 > 0.0 && delta0 < 1.0))
    throw Error(ErrorKind::kBadRange, "delta0 must lie in (0, 1)");
  if (!(eta > 0.0)) throw Error(ErrorKind::kBadRange, "eta must be positive");
  const double b2 = b_star_norm * b_star_norm;
  if (eta * b2 > 1.0 + kStepSlack)
    throw Error(ErrorKind::kStepTooLarge, "eta exceeds 1/||b*||^2");
  return std::sqrt(std::max(0.0, 1.0 - eta * (1.0 - delta0 * delta0) * b2));
}

std::size_t iterations_needed(double delta0, double eps, double c) {
  if (!(eps > 0.0 && eps <= delta0 && delta0 < 1.0))
    throw Error(ErrorKind::kBadRange, "need 0 < eps <= delta0 < 1");
  if (!(c > 0.0 && c < 1.0)) throw Error(ErrorKind::kBadRange, "need 0 < c < 1");
  const double t = 2.0 / (c * (1.0 - delta0 * delta0)) * std::log(delta0 / eps);
  return static_cast<std::size_t>(std::ceil(t));
}

double ffa_c_tilde(std::size_t n_clients, std::size_t m) {
  const double n = static_cast<double>(n_clients);
  const double md = static_cast<double>(m);
  return (n * (4.0 - md) - 2.0) / (n * n * md * (md - 2.0));
}

FfaLossPrediction ffa_homog_predicted_loss(std::size_t n_clients, std::size_t m, double delta0,
                                           double b_star_norm) {
  if (m < 3) throw Error(ErrorKind::kBadRange, "need m >= 3");
  if (n_clients < 1) throw Error(ErrorKind::kBadRange, "need N >= 1");
  FfaLossPrediction p;
  p.c_tilde = ffa_c_tilde(n_clients, m);
  p.predicted = (1.0 + p.c_tilde) * b_star_norm * b_star_norm * delta0 * delta0;
  p.n_clients = n_clients;
  p.m = m;
  p.delta0 = delta0;
  p.b_star_norm = b_star_norm;
  return p;
}

MonteCarloEstimate ffa_homog_empirical_loss(const LinearTask& task, const Vec& a0,
                                            std::size_t trials, Rng& rng, std::size_t workers) {
  task.validate();
  require_unit(a0, "a0");
  if (task.mode != SampleMode::kFiniteSample)
    throw Error(ErrorKind::kPopulationMode, "Monte Carlo needs a finite-sample task");
  if (!task.homogeneous()) throw Error(ErrorKind::kBadSpec, "task must be homogeneous");
  if (trials < kMinMonteCarloTrials)
    throw Error(ErrorKind::kBadRange, "need at least 100 trials");

  const std::uint64_t base = rng.next_u64();
  const std::size_t n = task.num_clients();
  const Vec& b_star = task.b_stars.front();
  std::vector<double> losses(trials);
  std::vector<std::exception_ptr> errors(trials);
  const int threads = static_cast<int>(std::max<std::size_t>(workers, 1));

#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
  for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(trials); ++tt) {
    const auto t = static_cast<std::size_t>(tt);
    try {
      Rng trial_rng = Rng::derive(base, t);
      std::vector<Vec> xa_star(n), xa0(n);
      Vec b_ffa(task.d);
      for (std::size_t i = 0; i < n; ++i) {
        const LinearShard s = gen_linear_shard(task, i, trial_rng);
        b_ffa += solve_b_exact(s, a0);
        xa_star[i] = matvec(s.X, task.a_star);
        xa0[i] = matvec(s.X, a0);
      }
      b_ffa *= 1.0 / static_cast<double>(n);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < task.m; ++j) {
          for (std::size_t k = 0; k < task.d; ++k) {
            const double r = xa_star[i][j] * b_star[k] - xa0[i][j] * b_ffa[k];
            total += r * r;
          }
        }
      }
      losses[t] = total / static_cast<double>(n * task.m);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  MonteCarloEstimate est;
  est.trials = trials;
  double sum = 0.0;
  for (double l : losses) sum += l;
  est.mean = sum / static_cast<double>(trials);
  double ss = 0.0;
  for (double l : losses) ss += (l - est.mean) * (l - est.mean);
  const double var = ss / static_cast<double>(trials - 1);
  est.std_err = std::sqrt(var / static_cast<double>(trials));
  return est;
}

double population_global_loss(const LinearTask& task, const Vec& a, const Vec& b) {
  const Mat model = outer(a, b);
  double total = 0.0;
  for (const Vec& bi : task.b_stars) {
    const double f = frob_norm(outer(task.a_star, bi) - model);
    total += f * f;
  }
  return total / static_cast<double>(task.num_clients());
}

double ffa_heter_loss_exact(const LinearTask& task, const Vec& a0) {
  task.validate();
  if (task.mode != SampleMode::kPopulation)
    throw Error(ErrorKind::kFiniteSampleMode, "exact FFA loss needs a population task");
  require_unit(a0, "a0");
  const Vec b_ffa = dot(task.a_star, a0) * task.b_bar_star();
  return population_global_loss(task, a0, b_ffa);
}

double task_l_max(const LinearTask& task) {
  if (task.l_max) return *task.l_max;
  double l = 0.0;
  for (const Vec& b : task.b_stars) l = std::max(l, norm(b));
  return l;
}

PopulationStep heter_population_round(const Vec& a, const LinearTask& task, double eta) {
  task.validate();
  if (task.mode != SampleMode::kPopulation)
    throw Error(ErrorKind::kFiniteSampleMode, "population round needs a population task");
  require_unit(a, "a");
  if (!(eta > 0.0)) throw Error(ErrorKind::kBadRange, "eta must be positive");
  const double l = task_l_max(task);
  if (2.0 * eta * l * l > 1.0 + kStepSlack)
    throw Error(ErrorKind::kStepTooLarge, "eta exceeds 1/(2 L_max^2)");
  const Vec b_bar_star = task.b_bar_star();
  PopulationStep step;
  step.b_bar = dot(task.a_star, a) * b_bar_star;
  const double bb = dot(step.b_bar, step.b_bar);
  const double sb = dot(b_bar_star, step.b_bar);
  const Vec a_hat = a - 2.0 * eta * (bb * a - sb * task.a_star);
  step.a_next = unit_normalize(a_hat);
  return step;
}

std::vector<TheoryRow> contraction_rows(const ContractionReport& report) {
  std::vector<TheoryRow> rows;
  std::size_t r = 0;
  for (std::size_t t = 0; t < report.iterations(); ++t) {
    TheoryRow row;
    row.round = t + 1;
    row.trained_factor = "AB";
    if (t < report.losses.size()) row.global_loss = report.losses[t];
    row.angle_distance = report.deltas[t + 1];
    if (report.deltas[t] > kAngleFloor && r < report.ratios.size()) row.ratio = report.ratios[r++];
    row.bound = report.bound;
    rows.push_back(row);
  }
  return rows;
}

void write_theory_csv(std::ostream& out, const std::vector<TheoryRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << kTheoryCsvHeader << '\n';
  for (const TheoryRow& r : rows) {
    out << r.round << ',' << r.trained_factor << ',' << opt(r.global_loss) << ','
        << opt(r.angle_distance) << ",,," << opt(r.ratio) << ',' << opt(r.bound) << ','
        << opt(r.predicted_loss) << ',' << opt(r.empirical_loss) << ',' << opt(r.std_err)
        << '\n';
  }
}

}  // namespace fedlora
