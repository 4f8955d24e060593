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

#include "fedlora/linear_task.hpp"

#include <cmath>
#include <string>

#include "fedlora/error.hpp"

namespace fedlora {
namespace {

void require_finite_mode(const LinearShard& shard) {
  if (shard.X.rows() != shard.Y.rows() || shard.X.cols() != shard.a_star.dim() ||
      shard.Y.cols() != shard.b_star.dim()) {
    throw Error(ErrorKind::kShapeMismatch, "linear shard has inconsistent X/Y shapes");
  }
}

void require_dims(const LinearShard& shard, const Vec& a, const Vec& b) {
  if (a.dim() != shard.a_star.dim() || b.dim() != shard.b_star.dim()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter dims do not match the shard");
  }
}

}  // namespace

bool LinearTask::homogeneous() const {
  for (const Vec& b : b_stars)
    if (!(b == b_stars.front())) return false;
  return true;
}

Vec LinearTask::b_bar_star() const {
  Vec mean(d);
  for (const Vec& b : b_stars) mean += b;
  if (!b_stars.empty()) mean *= 1.0 / static_cast<double>(b_stars.size());
  return mean;
}

void LinearTask::validate() const {
  if (d == 0 || a_star.dim() != d) throw Error(ErrorKind::kBadSpec, "a_star must have dim d");
  if (std::abs(norm(a_star) - 1.0) > kUnitTolerance)
    throw Error(ErrorKind::kBadSpec, "a_star must be a unit vector");
  if (b_stars.empty()) throw Error(ErrorKind::kBadSpec, "need at least one client");
  for (const Vec& b : b_stars) {
    if (b.dim() != d) throw Error(ErrorKind::kBadSpec, "b_i* must have dim d");
    if (l_max && norm(b) > *l_max) throw Error(ErrorKind::kBadSpec, "||b_i*|| exceeds L_max");
  }
  if (mode == SampleMode::kFiniteSample && m == 0)
    throw Error(ErrorKind::kBadSpec, "finite-sample task needs m >= 1");
}

LinearTask make_homogeneous_task(std::size_t d, std::size_t m, std::size_t n_clients,
                                 double b_norm, SampleMode mode, Rng& rng) {
  LinearTask task;
  task.d = d;
  task.m = m;
  task.mode = mode;
  task.a_star = random_unit_vector(rng, d);
  const Vec b = b_norm * random_unit_vector(rng, d);
  task.b_stars.assign(n_clients, b);
  task.validate();
  return task;
}

LinearTask make_heterogeneous_task(std::size_t d, std::size_t m, std::size_t n_clients,
                                   double b_bar_norm, double gamma, SampleMode mode, Rng& rng) {
  if (n_clients == 0) throw Error(ErrorKind::kBadSpec, "need at least one client");
  LinearTask task;
  task.d = d;
  task.m = m;
  task.mode = mode;
  task.a_star = random_unit_vector(rng, d);
  const Vec b_bar = b_bar_norm * random_unit_vector(rng, d);
  std::vector<Vec> z(n_clients);
  for (Vec& zi : z) zi = gaussian_vector(rng, d);
  if (n_clients > 1 && gamma > 0.0) {
    Vec mean(d);
    for (const Vec& zi : z) mean += zi;
    mean *= 1.0 / static_cast<double>(n_clients);
    double spread = 0.0;
    for (Vec& zi : z) {
      zi -= mean;
      spread += dot(zi, zi);
    }
    const double scale = 1.0 / std::sqrt(spread / static_cast<double>(n_clients));
    for (Vec& zi : z) zi *= scale;
  } else {
    for (Vec& zi : z) zi = Vec(d);
  }
  for (const Vec& zi : z) task.b_stars.push_back(b_bar + gamma * zi);
  task.validate();
  return task;
}

LinearShard gen_linear_shard(const LinearTask& task, std::size_t client, Rng& rng) {
  if (task.mode != SampleMode::kFiniteSample)
    throw Error(ErrorKind::kPopulationMode, "population task has no sampled design");
  if (client >= task.num_clients()) throw Error(ErrorKind::kInvalidArgument, "client index");
  LinearShard shard;
  shard.mode = SampleMode::kFiniteSample;
  shard.a_star = task.a_star;
  shard.b_star = task.b_stars[client];
  shard.X = gaussian_matrix(rng, task.m, task.d);
  const Vec xa = matvec(shard.X, task.a_star);
  shard.Y = outer(xa, shard.b_star);
  return shard;
}

LinearShard population_shard(const LinearTask& task, std::size_t client) {
  if (task.mode != SampleMode::kPopulation)
    throw Error(ErrorKind::kFiniteSampleMode, "finite-sample task has no population shard");
  if (client >= task.num_clients()) throw Error(ErrorKind::kInvalidArgument, "client index");
  return LinearShard{SampleMode::kPopulation, {}, {}, task.a_star, task.b_stars[client]};
}

double local_loss_linear(const LinearShard& shard, const Vec& a, const Vec& b) {
  require_dims(shard, a, b);
  if (shard.mode == SampleMode::kPopulation) {
    const Mat diff = outer(shard.a_star, shard.b_star) - outer(a, b);
    const double f = frob_norm(diff);
    return f * f;
  }
  require_finite_mode(shard);
  const Vec xa = matvec(shard.X, a);
  double acc = 0.0;
  for (std::size_t i = 0; i < shard.Y.rows(); ++i)
    for (std::size_t j = 0; j < shard.Y.cols(); ++j) {
      const double r = shard.Y(i, j) - xa[i] * b[j];
      acc += r * r;
    }
  return acc / static_cast<double>(shard.X.rows());
}

Vec solve_b_exact(const LinearShard& shard, const Vec& a) {
  if (a.dim() != shard.a_star.dim()) throw Error(ErrorKind::kShapeMismatch, "solve_b_exact");
  if (std::abs(norm(a) - 1.0) > kUnitTolerance)
    throw Error(ErrorKind::kNotUnit, "solve_b_exact expects a unit vector");
  if (shard.mode == SampleMode::kPopulation) {
    return dot(shard.a_star, a) * shard.b_star;
  }
  require_finite_mode(shard);
  const Vec xa = matvec(shard.X, a);
  const double denom = dot(xa, xa);
  if (!(denom > kDegenerateDesignTolerance * static_cast<double>(shard.X.rows()))) {
    throw Error(ErrorKind::kDegenerateDesign, "a^T X^T X a = " + std::to_string(denom));
  }
  // b^T = a^T X^T Y / (a^T X^T X a)
  Vec b = matvec_transposed(shard.Y, xa);
  b *= 1.0 / denom;
  return b;
}

Vec grad_a_linear(const LinearShard& shard, const Vec& a, const Vec& b) {
  require_dims(shard, a, b);
  const double bb = dot(b, b);
  if (shard.mode == SampleMode::kPopulation) {
    // 2 (a b^T b - a* b*^T b)
    Vec g = bb * a;
    g -= dot(shard.b_star, b) * shard.a_star;
    g *= 2.0;
    return g;
  }
  require_finite_mode(shard);
  // (2/m) X^T (X a b^T b - Y b)
  Vec r = bb * matvec(shard.X, a);
  r -= matvec(shard.Y, b);
  Vec g = matvec_transposed(shard.X, r);
  g *= 2.0 / static_cast<double>(shard.X.rows());
  return g;
}

ClientVariance client_variance(const LinearTask& task) {
  const Vec mean = task.b_bar_star();
  double acc = 0.0;
  for (const Vec& b : task.b_stars) {
    const Vec dev = b - mean;
    acc += dot(dev, dev);
  }
  return {task.b_stars.empty() ? 0.0 : acc / static_cast<double>(task.b_stars.size())};
}

Mat solve_spd(const Mat& s, const Mat& rhs, double floor) {
  const std::size_t n = s.rows();
  if (s.cols() != n || rhs.rows() != n) throw Error(ErrorKind::kShapeMismatch, "solve_spd");
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > floor)) {
      throw Error(ErrorKind::kDegenerateDesign, "pivot " + std::to_string(diag));
    }
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = s(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / l(j, j);
    }
  }
  Mat x = rhs;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x(i, c);
      for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * x(k, c);
      x(i, c) = acc / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double acc = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) acc -= l(k, i) * x(k, c);
      x(i, c) = acc / l(i, i);
    }
  }
  return x;
}

LinearObjective::LinearObjective(LinearShard shard)
    : shard_(std::move(shard)), target_(outer(shard_.a_star, shard_.b_star)) {}

std::size_t LinearObjective::num_samples() const {
  return shard_.mode == SampleMode::kPopulation ? 0 : shard_.X.rows();
}

double LinearObjective::loss(const GlobalModel& model) const {
  const Mat w = model.effective_weight();
  if (shard_.mode == SampleMode::kPopulation) {
    const double f = frob_norm(target_ - w);
    return f * f;
  }
  const Mat r = shard_.Y - matmul(shard_.X, w);
  const double f = frob_norm(r);
  return f * f / static_cast<double>(shard_.X.rows());
}

FactorGrads LinearObjective::gradient(const GlobalModel& model, TrainMask mask,
                                      std::span<const std::size_t> rows) const {
  const Mat w = model.effective_weight();
  Mat grad_w;
  if (shard_.mode == SampleMode::kPopulation) {
    grad_w = -2.0 * (target_ - w);
  } else if (rows.empty()) {
    const Mat r = shard_.Y - matmul(shard_.X, w);
    grad_w = matmul(shard_.X.transposed(), r);
    grad_w *= -2.0 / static_cast<double>(shard_.X.rows());
  } else {
    Mat xb(rows.size(), shard_.X.cols());
    Mat yb(rows.size(), shard_.Y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto xs = shard_.X.row_span(rows[i]);
      auto ys = shard_.Y.row_span(rows[i]);
      std::copy(xs.begin(), xs.end(), xb.row_span(i).begin());
      std::copy(ys.begin(), ys.end(), yb.row_span(i).begin());
    }
    const Mat r = yb - matmul(xb, w);
    grad_w = matmul(xb.transposed(), r);
    grad_w *= -2.0 / static_cast<double>(rows.size());
  }
  const LoraAdapter& ad = model.adapter;
  FactorGrads out;
  if (mask != TrainMask::kTrainB) out.dA = ad.alpha * matmul(grad_w, ad.B.transposed());
  if (mask != TrainMask::kTrainA) out.dB = ad.alpha * matmul(ad.A.transposed(), grad_w);
  return out;
}

Mat LinearObjective::exact_b(const GlobalModel& model) const {
  const LoraAdapter& ad = model.adapter;
  Mat residual_target;
  Mat gram;
  Mat cross;
  if (shard_.mode == SampleMode::kPopulation) {
    residual_target = model.base.empty() ? target_ : target_ - model.base;
    gram = matmul(ad.A.transposed(), ad.A);
    cross = matmul(ad.A.transposed(), residual_target);
    Mat b = solve_spd(gram, cross, kDegenerateDesignTolerance);
    return (1.0 / ad.alpha) * b;
  }
  Mat y = shard_.Y;
  if (!model.base.empty()) y -= matmul(shard_.X, model.base);
  const Mat z = matmul(shard_.X, ad.A);  // m x r
  const Mat zt = z.transposed();
  gram = matmul(zt, z);
  cross = matmul(zt, y);
  Mat b = solve_spd(gram, cross,
                    kDegenerateDesignTolerance * static_cast<double>(shard_.X.rows()));
  return (1.0 / ad.alpha) * b;
}

}  // namespace fedlora
