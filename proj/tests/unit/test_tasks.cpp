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
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedlora/datasets.hpp"
#include "fedlora/error.hpp"
#include "fedlora/linear_task.hpp"
#include "fedlora/svd.hpp"
#include "fedlora/two_layer.hpp"
#include "oracles.hpp"

using namespace fedlora;

namespace {

LinearTask small_task(std::size_t d, std::size_t m, SampleMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return make_heterogeneous_task(d, m, 3, 1.5, 0.7, mode, rng);
}

// Least squares over b for the design column z = X a, solved by Eigen's QR.
Vec lstsq_b(const LinearShard& s, const Vec& a) {
  const Eigen::VectorXd z = oracle::to_eigen(s.X) * oracle::to_eigen(a);
  const Eigen::MatrixXd zm = z;
  const Eigen::MatrixXd sol = zm.colPivHouseholderQr().solve(oracle::to_eigen(s.Y));
  return oracle::from_eigen_vec(sol.row(0).transpose());
}

void check_partition(const Partition& p, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& shard : p)
    for (std::size_t i : shard) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

std::set<int> label_set(std::span<const int> labels, const std::vector<std::size_t>& rows) {
  std::set<int> out;
  for (std::size_t i : rows) out.insert(labels[i]);
  return out;
}

TwoLayerNet random_net(Rng& rng, std::size_t d, std::size_t r, std::size_t c) {
  TwoLayerNet net;
  net.w_out = gaussian_matrix(rng, d, c);
  net.adapter = {gaussian_matrix(rng, d, r), gaussian_matrix(rng, r, d), 1.0};
  return net;
}

LabeledShard random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t c) {
  LabeledShard b;
  b.features = gaussian_matrix(rng, n, d);
  b.num_classes = c;
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.below(c)));
  return b;
}

}  // namespace

TEST_CASE("task generators") {
  Rng rng(1);
  const LinearTask h = make_homogeneous_task(10, 20, 4, 2.0, SampleMode::kFiniteSample, rng);
  CHECK(h.homogeneous());
  CHECK(std::abs(norm(h.a_star) - 1.0) <= 1e-12);
  CHECK(std::abs(norm(h.b_stars[0]) - 2.0) <= 1e-12);
  CHECK(client_variance(h).gamma_sq == 0.0);

  const LinearTask t = make_heterogeneous_task(10, 20, 5, 1.0, 0.6, SampleMode::kPopulation, rng);
  CHECK(!t.homogeneous());
  CHECK(std::abs(norm(t.b_bar_star()) - 1.0) <= 1e-12);
  CHECK(std::abs(client_variance(t).gamma_sq - 0.36) <= 1e-12);

  LinearTask capped = t;
  capped.l_max = 1e-3;
  CHECK_THROWS_AS(capped.validate(), Error);
}

TEST_CASE("client_variance") {
  LinearTask t;
  t.d = 2;
  t.m = 5;
  t.a_star = Vec::basis(2, 0);
  t.b_stars = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
  CHECK(std::abs(client_variance(t).gamma_sq - 1.0) <= 1e-15);
  LinearTask shifted = t;
  for (Vec& b : shifted.b_stars) b += Vec{3.0, -2.0};
  CHECK(std::abs(client_variance(shifted).gamma_sq - 1.0) <= 1e-12);
}

TEST_CASE("linear shards are rank one along b*") {
  const LinearTask task = small_task(8, 30, SampleMode::kFiniteSample, 2);
  Rng rng(3);
  const LinearShard s = gen_linear_shard(task, 1, rng);
  CHECK(s.X.rows() == 30);
  const Vec sv = singular_values(s.Y);
  CHECK(sv[1] <= 1e-10 * frob_norm(s.Y));
  const Mat p = projector_orth(unit_normalize(s.b_star));
  CHECK(frob_norm(matmul(s.Y, p)) <= 1e-10 * frob_norm(s.Y));

  LinearTask zero = task;
  zero.b_stars[0] = Vec(8);
  CHECK(frob_norm(gen_linear_shard(zero, 0, rng).Y) == 0.0);

  CHECK_THROWS_AS((void)population_shard(task, 0), Error);
  const LinearTask pop = small_task(8, 30, SampleMode::kPopulation, 2);
  CHECK_THROWS_AS((void)gen_linear_shard(pop, 0, rng), Error);
}

TEST_CASE("local_loss_linear") {
  const LinearTask task = small_task(6, 12, SampleMode::kFiniteSample, 4);
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const LinearShard s = gen_linear_shard(task, 0, rng);
    CHECK(local_loss_linear(s, s.a_star, s.b_star) <= 1e-28);
  }
  const LinearTask pop = small_task(6, 12, SampleMode::kPopulation, 4);
  const LinearShard p = population_shard(pop, 2);
  CHECK(local_loss_linear(p, p.a_star, p.b_star) == 0.0);
  Vec perp = Vec::basis(6, 0);
  perp -= dot(perp, p.a_star) * p.a_star;
  perp = unit_normalize(perp);
  const double bn = norm(p.b_star);
  CHECK(std::abs(local_loss_linear(p, perp, Vec(6)) - bn * bn) <= 1e-12);
}

TEST_CASE("solve_b_exact") {
  // X = I recovers b* exactly.
  LinearShard s;
  s.X = Mat::identity(4);
  s.a_star = Vec::basis(4, 2);
  s.b_star = Vec{0.5, -1.0, 2.0, 0.0};
  s.Y = matmul(s.X, outer(s.a_star, s.b_star));
  CHECK(max_abs_diff(Mat::row(solve_b_exact(s, s.a_star)), Mat::row(s.b_star)) <= 1e-14);

  const LinearTask pop = small_task(5, 10, SampleMode::kPopulation, 6);
  const LinearShard p = population_shard(pop, 0);
  Vec perp = Vec::basis(5, 1);
  perp -= dot(perp, p.a_star) * p.a_star;
  CHECK(norm(solve_b_exact(p, unit_normalize(perp))) <= 1e-14);

  Rng rng(7);
  const LinearTask task = small_task(7, 15, SampleMode::kFiniteSample, 7);
  for (int k = 0; k < 10; ++k) {
    const LinearShard sh = gen_linear_shard(task, k % 3, rng);
    const Vec a = random_unit_vector(rng, 7);
    const Vec b = solve_b_exact(sh, a);
    const Vec ref = lstsq_b(sh, a);
    CHECK(norm(b - ref) <= 1e-8 * std::max(1.0, norm(ref)));
    // No nearby b does better.
    const double base = local_loss_linear(sh, a, b);
    for (int j = 0; j < 20; ++j) {
      const Vec dir = random_unit_vector(rng, 7);
      CHECK(local_loss_linear(sh, a, b + 1e-3 * dir) >= base);
    }
  }

  LinearShard degenerate = s;
  degenerate.X = Mat(4, 4);
  CHECK_THROWS_AS((void)solve_b_exact(degenerate, s.a_star), Error);
}

TEST_CASE("grad_a_linear") {
  Rng rng(8);
  const LinearTask task = small_task(6, 20, SampleMode::kFiniteSample, 8);
  const LinearShard s = gen_linear_shard(task, 1, rng);
  CHECK(norm(grad_a_linear(s, s.a_star, s.b_star)) <= 1e-12);
  CHECK(norm(grad_a_linear(s, random_unit_vector(rng, 6), Vec(6))) == 0.0);

  for (int k = 0; k < 10; ++k) {
    const Vec a = gaussian_vector(rng, 6);
    const Vec b = gaussian_vector(rng, 6);
    const Mat g = Mat::column(grad_a_linear(s, a, b));
    const Mat fd = oracle::central_diff(
        [&](const Mat& x) { return local_loss_linear(s, x.col_vec(0), b); }, Mat::column(a), 1e-6);
    CHECK(oracle::rel_err(g, fd) <= 1e-5);
  }
}

TEST_CASE("LinearObjective agrees with the rank-1 helpers") {
  Rng rng(9);
  const LinearTask task = small_task(5, 25, SampleMode::kFiniteSample, 9);
  const LinearShard s = gen_linear_shard(task, 0, rng);
  const LinearObjective obj(s);
  const Vec a = random_unit_vector(rng, 5);
  const Vec b = gaussian_vector(rng, 5);
  GlobalModel model{Mat(), {Mat::column(a), Mat::row(b), 1.0}};
  CHECK(std::abs(obj.loss(model) - local_loss_linear(s, a, b)) <= 1e-12);
  const FactorGrads g = obj.gradient(model, TrainMask::kTrainA, {});
  REQUIRE(g.dA.has_value());
  CHECK(!g.dB.has_value());
  CHECK(max_abs_diff(*g.dA, Mat::column(grad_a_linear(s, a, b))) <= 1e-12);
  const Mat bx = obj.exact_b(model);
  CHECK(max_abs_diff(bx, Mat::row(solve_b_exact(s, a))) <= 1e-10);
}

TEST_CASE("two-layer forward") {
  TwoLayerNet net;
  net.w_out = Mat{{1.0, 0.0}, {0.0, 1.0}};
  net.adapter = {Mat{{1.0}, {0.0}}, Mat{{1.0, -1.0}}, 1.0};
  // W = [[1, -1], [0, 0]]; x W = (x0, -x0), ReLU keeps the positive part.
  const Vec z = forward_two_layer(net, Vec{2.0, 5.0});
  CHECK(z == Vec{2.0, 0.0});
  CHECK(forward_two_layer(net, Vec{-3.0, 1.0}) == Vec{0.0, 3.0});
  CHECK(forward_two_layer(net, Vec{0.0, 0.0}) == Vec{0.0, 0.0});
  net.adapter.B = Mat(1, 2);
  CHECK(forward_two_layer(net, Vec{2.0, 5.0}) == Vec{0.0, 0.0});
}

TEST_CASE("two-layer gradient") {
  Rng rng(10);
  for (int k = 0; k < 10; ++k) {
    TwoLayerNet net = random_net(rng, 8, 2, 3);
    const LabeledShard batch = random_batch(rng, 4, 8, 3);
    const FactorGrads g = grad_two_layer(net, batch, TrainMask::kTrainBoth);
    const Mat fa = oracle::central_diff(
        [&](const Mat& x) {
          TwoLayerNet n2 = net;
          n2.adapter.A = x;
          return cross_entropy_loss(n2, batch);
        },
        net.adapter.A, 1e-6);
    const Mat fb = oracle::central_diff(
        [&](const Mat& x) {
          TwoLayerNet n2 = net;
          n2.adapter.B = x;
          return cross_entropy_loss(n2, batch);
        },
        net.adapter.B, 1e-6);
    CHECK(oracle::rel_err(*g.dA, fa) <= 1e-4);
    CHECK(oracle::rel_err(*g.dB, fb) <= 1e-4);
  }

  TwoLayerNet net = random_net(rng, 8, 2, 3);
  net.adapter.B = Mat(2, 8);
  const LabeledShard batch = random_batch(rng, 4, 8, 3);
  const FactorGrads ga = grad_two_layer(net, batch, TrainMask::kTrainA);
  CHECK(frob_norm(*ga.dA) == 0.0);
  CHECK(!ga.dB.has_value());

  TwoLayerNet step = random_net(rng, 8, 2, 3);
  const double before = cross_entropy_loss(step, batch);
  const FactorGrads gb = grad_two_layer(step, batch, TrainMask::kTrainB);
  step.adapter.B -= 1e-3 * *gb.dB;
  CHECK(cross_entropy_loss(step, batch) < before);
}

TEST_CASE("label partitions") {
  Rng rng(11);
  ClusterSpec spec;
  spec.train_per_class = 20;
  spec.test_per_class = 5;
  const ClassificationData data = make_cluster_dataset(spec, rng);
  CHECK(data.train.size() == 200);
  CHECK(data.test.size() == 50);
  const auto& labels = data.train.labels;

  const Partition two = label_partition(labels, 10, 5, 2);
  check_partition(two, labels.size());
  std::set<int> all;
  for (const auto& shard : two) {
    const auto ls = label_set(labels, shard);
    CHECK(ls.size() == 2);
    for (int l : ls) CHECK(all.insert(l).second);
  }
  const Partition one = label_partition(labels, 10, 10, 1);
  check_partition(one, labels.size());
  for (const auto& shard : one) CHECK(label_set(labels, shard).size() == 1);
  CHECK_THROWS_AS((void)label_partition(labels, 10, 3, 2), Error);

  const auto shards = split_by_label(data.train, 10, 1);
  std::size_t total = 0;
  for (const auto& s : shards) total += s.size();
  CHECK(total == data.train.size());
}

TEST_CASE("dirichlet partitions") {
  Rng rng(12);
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c)
    for (int i = 0; i < 1000; ++i) labels.push_back(c);

  const Partition flat = dirichlet_partition(labels, 10, 5, 1e6, rng);
  check_partition(flat, labels.size());
  for (const auto& shard : flat) {
    std::vector<double> hist(10, 0.0);
    for (std::size_t i : shard) hist[static_cast<std::size_t>(labels[i])] += 1.0;
    for (double h : hist) CHECK(std::abs(h / shard.size() - 0.1) <= 0.01);
  }

  int skewed = 0;
  for (std::uint64_t seed = 0; seed < 9; ++seed) {
    Rng r(seed);
    const Partition p = dirichlet_partition(labels, 10, 5, 0.1, r);
    check_partition(p, labels.size());
    bool any = false;
    for (const auto& shard : p) {
      if (shard.empty()) continue;
      std::vector<double> hist(10, 0.0);
      for (std::size_t i : shard) hist[static_cast<std::size_t>(labels[i])] += 1.0;
      any = any || *std::max_element(hist.begin(), hist.end()) > 0.5 * shard.size();
    }
    skewed += any ? 1 : 0;
  }
  CHECK(skewed >= 5);
}

TEST_CASE("IDX parsing") {
  const std::vector<std::uint8_t> images = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2,
                                            0, 255, 51, 102};
  const Mat img = parse_idx_images(images);
  CHECK(img.rows() == 2);
  CHECK(img.cols() == 2);
  CHECK(img(0, 1) == 1.0);
  CHECK(std::abs(img(1, 0) - 0.2) <= 1e-15);

  const std::vector<std::uint8_t> labels = {0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 2};
  CHECK(parse_idx_labels(labels) == std::vector<int>{7, 0, 2});

  std::vector<std::uint8_t> bad = labels;
  bad[3] = 3;
  CHECK_THROWS_AS((void)parse_idx_labels(bad), Error);
  std::vector<std::uint8_t> short_img(images.begin(), images.end() - 1);
  CHECK_THROWS_AS((void)parse_idx_images(short_img), Error);
  CHECK_THROWS_AS((void)read_idx_labels("/nonexistent/labels.idx"), Error);
}
