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
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fedlora/error.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/theory.hpp"

using namespace fedlora;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

LinearTask two_client_task() {
  LinearTask t;
  t.d = 2;
  t.m = 1;
  t.mode = SampleMode::kPopulation;
  t.a_star = Vec::basis(2, 0);
  t.b_stars = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
  return t;
}

}  // namespace

TEST_CASE("contraction_bound") {
  CHECK(contraction_bound(1e-9, 1.0, 1.0) <= 1e-8);
  CHECK(contraction_bound(1.0 - 1e-9, 1.0, 1.0) >= 0.9999);
  CHECK(std::abs(contraction_bound(0.6, 0.5, 1.0) - std::sqrt(0.68)) <= 1e-15);
  CHECK(std::abs(contraction_bound(0.6, 0.5, 1.0) - 0.82462) <= 1e-5);
  // eta = 1/||b||^2 rounds; it must still be accepted.
  CHECK_NOTHROW((void)contraction_bound(0.5, 1.0 / (3.0 * 3.0), 3.0));
  try {
    (void)contraction_bound(0.5, 1.1, 1.0);
    FAIL("expected StepTooLarge");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kStepTooLarge);
  }
  CHECK_THROWS_AS((void)contraction_bound(0.0, 0.5, 1.0), Error);
}

TEST_CASE("iterations_needed") {
  CHECK(iterations_needed(0.5, 0.5, 0.5) == 0);
  CHECK(iterations_needed(0.5, 0.005, 0.5) == 25);
  std::size_t prev = 0;
  for (double eps : {0.4, 0.1, 1e-2, 1e-3, 1e-6}) {
    const std::size_t t = iterations_needed(0.5, eps, 0.5);
    CHECK(t >= prev);
    prev = t;
  }
  CHECK_THROWS_AS((void)iterations_needed(0.5, 0.6, 0.5), Error);
  CHECK_THROWS_AS((void)iterations_needed(0.5, 0.1, 1.0), Error);
}

TEST_CASE("FFA predicted loss") {
  CHECK(ffa_c_tilde(10, 50) == doctest::Approx(-0.001925).epsilon(1e-12));
  CHECK(std::abs(ffa_c_tilde(10, 50) + 462.0 / 240000.0) <= 1e-18);
  const auto p = ffa_homog_predicted_loss(10, 50, 0.5, 2.0);
  CHECK(p.predicted == (1.0 + p.c_tilde) * 4.0 * 0.25);
  CHECK(ffa_homog_predicted_loss(10, 50, 1e-9, 2.0).predicted <= 1e-17);
  const auto big = ffa_homog_predicted_loss(100000, 100000, 0.5, 2.0);
  CHECK(std::abs(big.predicted - 1.0) <= 1e-9);
  CHECK_THROWS_AS((void)ffa_homog_predicted_loss(10, 2, 0.5, 2.0), Error);
}

TEST_CASE("FFA empirical loss") {
  Rng rng(1);
  LinearTask task = make_homogeneous_task(20, 50, 10, 2.0, SampleMode::kFiniteSample, rng);
  const MonteCarloEstimate at_star = ffa_homog_empirical_loss(task, task.a_star, 100, rng);
  CHECK(at_star.mean <= 1e-20);

  const Vec a0 = init_with_angle(task.a_star, 0.5, rng);
  LinearTask zero = task;
  for (Vec& b : zero.b_stars) b = Vec(20);
  CHECK(ffa_homog_empirical_loss(zero, a0, 100, rng).mean == 0.0);

  const MonteCarloEstimate est = ffa_homog_empirical_loss(task, a0, 2000, rng);
  const double predicted = ffa_homog_predicted_loss(10, 50, 0.5, 2.0).predicted;
  CHECK(std::abs(est.mean - predicted) <= 4.0 * est.std_err);

  // Worker count does not change the estimate.
  Rng r1(9), r2(9);
  const auto s = ffa_homog_empirical_loss(task, a0, 200, r1, 1);
  const auto p = ffa_homog_empirical_loss(task, a0, 200, r2, 4);
  CHECK(s.mean == p.mean);
  CHECK(s.std_err == p.std_err);

  CHECK_THROWS_AS((void)ffa_homog_empirical_loss(task, a0, 99, rng), Error);
}

TEST_CASE("FFA heterogeneous exact loss") {
  Rng rng(2);
  LinearTask homog = make_homogeneous_task(8, 1, 4, 2.0, SampleMode::kPopulation, rng);
  CHECK(ffa_heter_loss_exact(homog, homog.a_star) <= 1e-28);
  const Vec a0 = init_with_angle(homog.a_star, 0.5, rng);
  CHECK(std::abs(ffa_heter_loss_exact(homog, a0) - 1.0) <= 1e-12);

  const LinearTask pair = two_client_task();
  for (double theta : {0.1, 0.7, 1.3}) {
    const Vec a{std::cos(theta), std::sin(theta)};
    CHECK(std::abs(ffa_heter_loss_exact(pair, a) - 1.0) <= 1e-12);
  }

  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 2 + rng.below(20), n = 1 + rng.below(10);
    const double gamma = rng.uniform() * 2.0, bn = 0.1 + rng.uniform() * 3.0;
    const LinearTask t = make_heterogeneous_task(d, 1, n, bn, gamma, SampleMode::kPopulation, rng);
    const double delta0 = 0.05 + 0.9 * rng.uniform();
    const Vec a = init_with_angle(t.a_star, delta0, rng);
    const double g2 = client_variance(t).gamma_sq;
    const double expected = g2 + bn * bn * delta0 * delta0;
    CHECK(std::abs(ffa_heter_loss_exact(t, a) - expected) <= 1e-10);
  }

  Rng r(3);
  const LinearTask sampled = make_homogeneous_task(4, 10, 2, 1.0, SampleMode::kFiniteSample, r);
  CHECK_THROWS_AS((void)ffa_heter_loss_exact(sampled, sampled.a_star), Error);
}

TEST_CASE("heterogeneous population round") {
  Rng rng(4);
  const LinearTask task = make_heterogeneous_task(6, 1, 4, 1.0, 0.5, SampleMode::kPopulation, rng);
  const double eta = 1.0 / (2.0 * std::pow(task_l_max(task), 2));
  const PopulationStep fixed = heter_population_round(task.a_star, task, eta);
  CHECK(norm(fixed.a_next - task.a_star) <= 1e-14);
  CHECK(norm(fixed.b_bar - task.b_bar_star()) <= 1e-14);

  Vec perp = Vec::basis(6, 0);
  perp -= dot(perp, task.a_star) * task.a_star;
  perp = unit_normalize(perp);
  const PopulationStep saddle = heter_population_round(perp, task, eta);
  CHECK(norm(saddle.b_bar) <= 1e-15);
  CHECK(norm(saddle.a_next - perp) <= 1e-15);

  CHECK_THROWS_AS((void)heter_population_round(task.a_star, task, 2.0 * eta), Error);
}

TEST_CASE("one population iteration matches the scalar recursion") {
  // a* = e1, a = (cos t, sin t), ||b*|| = 1: b_bar = b* cos t and
  // a_hat = a - 2 eta cos t (cos t a - a*).
  const double theta = std::numbers::pi / 6.0, eta = 0.25;
  const double c = std::cos(theta), s = std::sin(theta);
  const double x = c - 2.0 * eta * c * (c * c - 1.0);
  const double y = s * (1.0 - 2.0 * eta * c * c);
  const double delta1 = std::abs(y) / std::hypot(x, y);

  LinearTask task;
  task.d = 2;
  task.m = 1;
  task.mode = SampleMode::kPopulation;
  task.a_star = Vec::basis(2, 0);
  task.b_stars = {Vec{0.6, 0.8}};
  const Vec a{c, s};
  CHECK(std::abs(angle_distance(task.a_star, heter_population_round(a, task, eta).a_next) -
                 delta1) <= 1e-12);

  AltMinOptions opt;
  opt.eta = eta;
  opt.iterations = 1;
  Rng rng(5);
  const ContractionReport rep = altmin_gd(task, a, opt, rng);
  CHECK(std::abs(rep.deltas[1] - delta1) <= 1e-12);
}

TEST_CASE("altmin_gd") {
  Rng rng(6);
  const LinearTask task = make_homogeneous_task(20, 100, 5, 1.0, SampleMode::kFiniteSample, rng);
  AltMinOptions opt;
  opt.eta = 0.5;
  opt.iterations = 10;
  const ContractionReport fixed = altmin_gd(task, init_with_angle(task.a_star, 1e-9, rng), opt, rng);
  for (double d : fixed.deltas) CHECK(d <= 1e-8);

  opt.stop_below = 1e-3;
  opt.iterations = 100;
  const ContractionReport stop = altmin_gd(task, init_with_angle(task.a_star, 0.5, rng), opt, rng);
  CHECK(stop.deltas.back() <= 1e-3);
  CHECK(stop.iterations() < 100);
  CHECK(contraction_rows(stop).size() == stop.iterations());

  std::ostringstream out;
  write_theory_csv(out, contraction_rows(stop));
  CHECK(out.str().rfind(kTheoryCsvHeader, 0) == 0);
}

TEST_CASE("homogeneous contraction at m = 500") {
  // Below 1/(2||b*||^2) the ratio sits well under the bound. At the
  // largest step allowed by contraction_bound the angle stalls near a*
  // (the projected factor 1 - 2 eta ||b_bar||^2 approaches -1).
  Rng rng(7);
  const LinearTask task = make_homogeneous_task(20, 500, 10, 1.0, SampleMode::kFiniteSample, rng);
  const Vec a0 = init_with_angle(task.a_star, 0.5, rng);
  AltMinOptions opt;
  opt.iterations = 10;

  opt.eta = 0.5;
  const ContractionReport half = altmin_gd(task, a0, opt, rng);
  CHECK(median(half.ratios) <= *half.bound + 0.05);

  opt.eta = 1.0;
  const ContractionReport full = altmin_gd(task, a0, opt, rng);
  REQUIRE(full.bound.has_value());
  CHECK(std::abs(*full.bound - std::sqrt(0.25)) <= 1e-12);
  CHECK(median(full.ratios) > *full.bound + 0.05);
}

TEST_CASE("population recovery and FFA saturation") {
  Rng rng(8);
  for (int k = 0; k < 10; ++k) {
    const LinearTask task = make_heterogeneous_task(10, 1, 5, 1.0, 0.8, SampleMode::kPopulation, rng);
    const double g2 = client_variance(task).gamma_sq;
    const double delta0 = 0.5;
    const Vec a0 = init_with_angle(task.a_star, delta0, rng);
    const double l = task_l_max(task);
    const double eta = 1.0 / (2.0 * l * l);

    AltMinOptions opt;
    opt.eta = eta;
    // Per step delta shrinks by 1 - 2 eta (1 - d0^2) ||b_bar*||^2 <= exp(-c (1 - d0^2) / 2)
    // with c = 4 eta ||b_bar*||^2.
    const double c = std::min(0.99, 4.0 * eta);
    opt.iterations = iterations_needed(delta0, 1e-4, c);
    opt.stop_below = 1e-4;
    const ContractionReport rep = altmin_gd(task, a0, opt, rng);
    CHECK(rep.deltas.back() <= 1e-4);
    const double eps = rep.deltas.back();
    const Mat target = outer(task.a_star, task.b_bar_star());
    const double err = frob_norm(outer(rep.a_final, rep.b_next) - target);
    CHECK(err <= eps * frob_norm(target) + 1e-9);
    CHECK(std::abs(population_global_loss(task, rep.a_final, rep.b_next) - g2) <= 1e-6);

    // With a frozen, the loss never leaves its floor.
    CHECK(ffa_heter_loss_exact(task, a0) ==
          doctest::Approx(g2 + delta0 * delta0).epsilon(1e-10));
  }
}

TEST_CASE("verify checks") {
  const auto checks = run_theory_checks(1);
  CHECK(checks.size() == 8);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += c.passed ? 0 : 1;
  // Only the full-step homogeneous contraction check fails.
  CHECK(failed == 1);
  CHECK(!checks.back().passed);
}
