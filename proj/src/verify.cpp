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

// Closed-form checks behind `fedlora verify`.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "fedlora/lora.hpp"
#include "fedlora/theory.hpp"

namespace fedlora {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

CheckResult check(std::string name, const std::function<std::pair<bool, std::string>()>& body) {
  CheckResult r{std::move(name), false, {}};
  try {
    auto [ok, detail] = body();
    r.passed = ok;
    r.detail = std::move(detail);
  } catch (const std::exception& e) {
    r.detail = std::string("threw: ") + e.what();
  }
  return r;
}

// Random heterogeneous population task with d <= 32, N <= 20.
LinearTask random_heter_task(Rng& rng) {
  const std::size_t d = 2 + rng.below(31);
  const std::size_t n = 1 + rng.below(20);
  const double b_bar = 0.5 + 1.5 * rng.uniform();
  const double gamma = n > 1 ? 1.5 * rng.uniform() : 0.0;
  return make_heterogeneous_task(d, 0, n, b_bar, gamma, SampleMode::kPopulation, rng);
}

}  // namespace

std::vector<CheckResult> run_theory_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;

  out.push_back(check("c_tilde(N=10, m=50)", [] {
    const double c = ffa_c_tilde(10, 50);
    return std::pair{std::abs(c - (-462.0 / 240000.0)) <= 1e-15, "c_tilde = " + fmt(c)};
  }));

  out.push_back(check("contraction_bound(0.6, 0.5, 1)", [] {
    const double b = contraction_bound(0.6, 0.5, 1.0);
    return std::pair{std::abs(b - std::sqrt(0.68)) <= 1e-12, "bound = " + fmt(b)};
  }));

  out.push_back(check("iterations_needed(0.5, 0.005, 0.5)", [] {
    const std::size_t t = iterations_needed(0.5, 0.005, 0.5);
    return std::pair{t == 25, "T = " + std::to_string(t)};
  }));

  out.push_back(check("homogeneous frozen-a loss vs closed form", [seed] {
    Rng rng = Rng::derive(seed, 1);
    bool ok = true;
    std::string detail;
    for (double delta0 : {0.3, 0.5, 0.8}) {
      const LinearTask task = make_homogeneous_task(20, 50, 10, 2.0, SampleMode::kFiniteSample, rng);
      const Vec a0 = init_with_angle(task.a_star, delta0, rng);
      const auto est = ffa_homog_empirical_loss(task, a0, 2000, rng, 1);
      const auto pred = ffa_homog_predicted_loss(10, 50, delta0, 2.0);
      const double z = std::abs(est.mean - pred.predicted) / est.std_err;
      ok = ok && z <= 4.0;
      detail += "d0=" + fmt(delta0) + " z=" + fmt(z) + " ";
    }
    return std::pair{ok, detail};
  }));

  out.push_back(check("heterogeneous frozen-a loss = gamma^2 + ||b_bar*||^2 delta0^2", [seed] {
    Rng rng = Rng::derive(seed, 2);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const LinearTask task = random_heter_task(rng);
      const double delta0 = 0.05 + 0.9 * rng.uniform();
      const Vec a0 = init_with_angle(task.a_star, delta0, rng);
      const double bb = norm(task.b_bar_star());
      const double formula = client_variance(task).gamma_sq + bb * bb * delta0 * delta0;
      worst = std::max(worst, std::abs(ffa_heter_loss_exact(task, a0) - formula));
    }
    return std::pair{worst <= 1e-10, "max error " + fmt(worst)};
  }));

  out.push_back(check("heterogeneous population round: b_bar and contraction", [seed] {
    Rng rng = Rng::derive(seed, 3);
    double worst_b = 0.0, worst_gap = -1.0;
    for (int k = 0; k < 100; ++k) {
      const LinearTask task = random_heter_task(rng);
      const double l = task_l_max(task);
      const double eta = 1.0 / (2.0 * l * l);
      const double delta0 = 0.05 + 0.9 * rng.uniform();
      const double bb = norm(task.b_bar_star());
      const double factor = 1.0 - 2.0 * eta * (1.0 - delta0 * delta0) * bb * bb;
      Vec a = init_with_angle(task.a_star, delta0, rng);
      double delta = delta0;
      for (int t = 0; t < 30; ++t) {
        const PopulationStep step = heter_population_round(a, task, eta);
        const Vec expect = dot(task.a_star, a) * task.b_bar_star();
        worst_b = std::max(worst_b, norm(step.b_bar - expect));
        const double next = angle_distance(task.a_star, step.a_next);
        worst_gap = std::max(worst_gap, next - delta * factor);
        a = step.a_next;
        delta = next;
      }
    }
    return std::pair{worst_b <= 1e-12 && worst_gap <= 1e-10,
                     "b_bar error " + fmt(worst_b) + ", worst bound excess " + fmt(worst_gap)};
  }));

  out.push_back(check("population recovery after convergence", [seed] {
    Rng rng = Rng::derive(seed, 4);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const LinearTask task = random_heter_task(rng);
      const double l = task_l_max(task);
      const double eps = 1e-6;
      const Vec a0 = init_with_angle(task.a_star, 0.5, rng);
      AltMinOptions opt;
      opt.eta = 1.0 / (2.0 * l * l);
      opt.iterations = 100000;
      opt.stop_below = eps;
      const ContractionReport rep = altmin_gd(task, a0, opt, rng);
      const Mat target = outer(task.a_star, task.b_bar_star());
      const double err = frob_norm(outer(rep.a_final, rep.b_next) - target) / frob_norm(target);
      worst = std::max(worst, err / eps);
    }
    return std::pair{worst <= 1.0 + 1e-3, "max error / (eps ||a* b_bar*^T||) = " + fmt(worst)};
  }));

  out.push_back(check("homogeneous contraction, eta = 1/||b*||^2", [seed] {
    Rng rng = Rng::derive(seed, 5);
    std::size_t within = 0, total = 0;
    for (int s = 0; s < 5; ++s) {
      const LinearTask task =
          make_homogeneous_task(20, 1000, 10, 1.0 + rng.uniform(), SampleMode::kFiniteSample, rng);
      const double b = norm(task.b_stars.front());
      AltMinOptions opt;
      opt.eta = 1.0 / (b * b);
      opt.iterations = 20;
      const ContractionReport rep = altmin_gd(task, init_with_angle(task.a_star, 0.5, rng), opt, rng);
      total += rep.ratios.size();
      within += rep.ratios.size() - rep.violations;
    }
    const double frac = static_cast<double>(within) / static_cast<double>(total);
    return std::pair{frac >= 0.9, "ratios within bound + 0.05: " + fmt(frac)};
  }));

  return out;
}

}  // namespace fedlora
