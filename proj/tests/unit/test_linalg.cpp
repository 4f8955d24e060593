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

#include <omp.h>

#include "doctest.h"
#include "fedlora/error.hpp"
#include "fedlora/linalg.hpp"
#include "fedlora/rng.hpp"
#include "fedlora/svd.hpp"
#include "oracles.hpp"

using namespace fedlora;

namespace {

bool throws_kind(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

bool orthonormal_columns(const Mat& q, double tol) {
  const Mat g = matmul(q.transposed(), q);
  return max_abs_diff(g, Mat::identity(q.cols())) <= tol;
}

}  // namespace

TEST_CASE("gaussian_matrix is reproducible and standard normal") {
  Rng r1(7), r2(7);
  CHECK(gaussian_matrix(r1, 2, 2) == gaussian_matrix(r2, 2, 2));

  Rng rng(7);
  const Mat x = gaussian_matrix(rng, 1000, 1);
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  mean /= 1000.0;
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= 999.0;
  CHECK(mean >= -0.1);
  CHECK(mean <= 0.1);
  CHECK(var >= 0.9);
  CHECK(var <= 1.1);

  CHECK(throws_kind(ErrorKind::kInvalidArgument, [] {
    Rng r(7);
    (void)gaussian_matrix(r, 0, 2);
  }));
}

TEST_CASE("derived streams differ and repeat") {
  Rng a = Rng::derive(1, 2, 3), b = Rng::derive(1, 2, 3), c = Rng::derive(1, 3, 2);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
}

TEST_CASE("gamma draws have the right mean") {
  Rng rng(11);
  for (double shape : {0.3, 1.0, 4.0}) {
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    // Var = shape, so 5 standard errors is sqrt(shape / n) * 5.
    CHECK(std::abs(sum / n - shape) <= 5.0 * std::sqrt(shape / n));
  }
}

TEST_CASE("frob_norm") {
  CHECK(frob_norm(Mat::identity(2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(frob_norm(Mat(3, 3)) == 0.0);
  CHECK(frob_norm(Mat{{3.0, 4.0}}) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("unit_normalize") {
  const Vec u = unit_normalize(Vec{3.0, 4.0});
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(unit_normalize(Vec::basis(3, 0)) == Vec::basis(3, 0));
  CHECK(throws_kind(ErrorKind::kZeroVector, [] { (void)unit_normalize(Vec{0.0, 0.0}); }));
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Vec v = gaussian_vector(rng, 7);
    CHECK(std::abs(norm(unit_normalize(v)) - 1.0) <= 1e-12);
  }
}

TEST_CASE("angle_distance") {
  const Vec e1 = Vec::basis(2, 0), e2 = Vec::basis(2, 1);
  CHECK(angle_distance(e1, e1) == 0.0);
  CHECK(angle_distance(e1, e2) == doctest::Approx(1.0).epsilon(1e-15));
  const Vec diag = unit_normalize(e1 + e2);
  CHECK(angle_distance(e1, diag) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(throws_kind(ErrorKind::kNotUnit, [&] { (void)angle_distance(e1, 2.0 * e2); }));

  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const Vec u = random_unit_vector(rng, 6), v = random_unit_vector(rng, 6);
    CHECK(std::abs(angle_distance(u, v) - angle_distance(v, u)) <= 1e-12);
    // Pythagoras: ||(I - uu^T) v||^2 + (u^T v)^2 = ||v||^2.
    const Vec w = 1.7 * gaussian_vector(rng, 6);
    const Vec pw = matvec(projector_orth(u), w);
    CHECK(std::abs(dot(pw, pw) + dot(u, w) * dot(u, w) - dot(w, w)) <= 1e-10);
  }
}

TEST_CASE("projector_orth") {
  const Mat p = projector_orth(Vec::basis(2, 0));
  CHECK(p == Mat{{0.0, 0.0}, {0.0, 1.0}});
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const Vec u = random_unit_vector(rng, 5);
    const Mat q = projector_orth(u);
    CHECK(norm(matvec(q, u)) <= 1e-12);
    CHECK(max_abs_diff(matmul(q, q), q) <= 1e-10);
    Vec v = gaussian_vector(rng, 5);
    v -= dot(u, v) * u;
    CHECK(norm(matvec(q, v) - v) <= 1e-12);
  }
  CHECK(throws_kind(ErrorKind::kNotUnit, [] { (void)projector_orth(Vec{1.0, 1.0}); }));
}

TEST_CASE("matmul agrees with Eigen and bitwise with the serial kernel") {
  // Force a real team even on a single-core host.
  omp_set_num_threads(4);
  Rng rng(1);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, std::tuple{64, 64, 64}, std::tuple{130, 70, 90}}) {
    const Mat a = gaussian_matrix(rng, m, k), b = gaussian_matrix(rng, k, n);
    const Mat c = matmul(a, b);
    CHECK(c == matmul_serial(a, b));
    const Eigen::MatrixXd ref = oracle::to_eigen(a) * oracle::to_eigen(b);
    CHECK((oracle::to_eigen(c) - ref).norm() <= 1e-12 * ref.norm());
  }
  CHECK_THROWS_AS((void)matmul(Mat(2, 3), Mat(2, 3)), Error);
}

TEST_CASE("hstack and vstack form block products") {
  Rng rng(2);
  std::vector<Mat> as{gaussian_matrix(rng, 4, 2), gaussian_matrix(rng, 4, 3)};
  std::vector<Mat> bs{gaussian_matrix(rng, 2, 5), gaussian_matrix(rng, 3, 5)};
  const Mat prod = matmul(hstack(as), vstack(bs));
  CHECK(max_abs_diff(prod, matmul(as[0], bs[0]) + matmul(as[1], bs[1])) <= 1e-12);
}

TEST_CASE("truncated_svd examples") {
  Rng rng(4);
  SUBCASE("rank one input") {
    const Mat m = outer(gaussian_vector(rng, 6), gaussian_vector(rng, 5));
    const Svd s = truncated_svd(m, 1);
    CHECK(frob_norm(s.reconstruct() - m) <= 1e-8 * frob_norm(m));
  }
  SUBCASE("identity, rank 2") {
    const Svd s = truncated_svd(Mat::identity(4), 2);
    CHECK(frob_norm(s.reconstruct() - Mat::identity(4)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("exact rank 3") {
    const Mat m = matmul(gaussian_matrix(rng, 8, 3), gaussian_matrix(rng, 3, 8));
    const Svd s = truncated_svd(m, 3);
    CHECK(frob_norm(s.reconstruct() - m) <= 1e-6 * frob_norm(m));
  }
  SUBCASE("rank too large") {
    CHECK(throws_kind(ErrorKind::kRankTooLarge, [] { (void)truncated_svd(Mat(3, 5), 4); }));
  }
}

TEST_CASE("truncated_svd matches Eigen on random matrices") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 2 + rng.below(20), cols = 2 + rng.below(20);
    const Mat m = gaussian_matrix(rng, rows, cols);
    const std::size_t r = 1 + rng.below(std::min(rows, cols));
    const Svd s = truncated_svd(m, r);
    const Eigen::VectorXd ref = oracle::singular_values(m);
    for (std::size_t k = 0; k < r; ++k) CHECK(std::abs(s.S[k] - ref(k)) <= 1e-10 * ref(0));
    for (std::size_t k = 1; k < r; ++k) CHECK(s.S[k] <= s.S[k - 1]);
    CHECK(orthonormal_columns(s.U, 1e-8));
    CHECK(orthonormal_columns(s.V, 1e-8));
    // Eckart-Young: residual equals the discarded energy.
    CHECK(std::abs(frob_norm(s.reconstruct() - m) - oracle::tail_energy(m, r)) <=
          1e-6 * frob_norm(m));
    // Sign convention on every left vector.
    for (std::size_t k = 0; k < r; ++k) {
      double best = 0.0;
      for (std::size_t i = 0; i < rows; ++i)
        if (std::abs(s.U(i, k)) > std::abs(best)) best = s.U(i, k);
      CHECK(best >= 0.0);
    }
  }
}

TEST_CASE("truncated_svd handles rank-deficient inputs with orthonormal U") {
  Rng rng(8);
  const Mat m = matmul(gaussian_matrix(rng, 10, 2), gaussian_matrix(rng, 2, 6));
  const Svd s = truncated_svd(m, 5);
  CHECK(orthonormal_columns(s.U, 1e-8));
  CHECK(s.S[2] <= 1e-10 * s.S[0]);
  CHECK(frob_norm(s.reconstruct() - m) <= 1e-10 * frob_norm(m));
}
