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

#include "fedlora/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fedlora/error.hpp"

namespace fedlora {
namespace {

using Column = std::vector<double>;

double col_dot(const Column& x, const Column& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

// Full thin SVD of a tall (rows >= cols) matrix given as columns.
struct ThinSvd {
  std::vector<Column> u;  // cols columns of length rows
  std::vector<double> s;
  std::vector<Column> v;  // cols columns of length cols
};

ThinSvd jacobi_tall(std::vector<Column> w) {
  const std::size_t n = w.size();
  const std::size_t m = n ? w.front().size() : 0;
  std::vector<Column> v(n, Column(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  const double tol = std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(m));
  for (int sweep = 0; sweep < kSvdMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = col_dot(w[p], w[p]);
        const double beta = col_dot(w[q], w[q]);
        const double gamma = col_dot(w[p], w[q]);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(col_dot(w[j], w[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  ThinSvd out;
  const double smax = n ? sigma[order.front()] : 0.0;
  const double negligible = std::max(smax * 1e-14, std::numeric_limits<double>::min());
  for (std::size_t idx : order) {
    Column u(m, 0.0);
    if (sigma[idx] > negligible) {
      for (std::size_t i = 0; i < m; ++i) u[i] = w[idx][i] / sigma[idx];
    }
    out.u.push_back(std::move(u));
    out.s.push_back(sigma[idx] > negligible ? sigma[idx] : 0.0);
    out.v.push_back(v[idx]);
  }

  // Complete left vectors of null singular values to an orthonormal set.
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (out.s[j] > 0.0) continue;
    while (candidate < m) {
      Column e(m, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < n; ++k) {
          if (k == j || (out.s[k] == 0.0 && k > j)) continue;
          const double proj = col_dot(out.u[k], e);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * out.u[k][i];
        }
      }
      const double len = std::sqrt(col_dot(e, e));
      if (len > 1e-6) {
        for (double& x : e) x /= len;
        out.u[j] = std::move(e);
        break;
      }
    }
  }
  return out;
}

ThinSvd decompose(const Mat& m, bool& swapped) {
  swapped = m.cols() > m.rows();
  const Mat& src = m;
  const std::size_t tall_rows = swapped ? m.cols() : m.rows();
  const std::size_t tall_cols = swapped ? m.rows() : m.cols();
  std::vector<Column> cols(tall_cols, Column(tall_rows));
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) {
      if (swapped) {
        cols[i][j] = src(i, j);
      } else {
        cols[j][i] = src(i, j);
      }
    }
  return jacobi_tall(std::move(cols));
}

}  // namespace

Mat Svd::reconstruct() const {
  Mat us = U;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= S[j];
  return matmul(us, V.transposed());
}

Svd truncated_svd(const Mat& m, std::size_t r) {
  if (r > std::min(m.rows(), m.cols())) {
    throw Error(ErrorKind::kRankTooLarge, "rank " + std::to_string(r) + " exceeds min(" +
                                              std::to_string(m.rows()) + ", " +
                                              std::to_string(m.cols()) + ")");
  }
  if (!all_finite(m)) throw Error(ErrorKind::kInvalidArgument, "truncated_svd: non-finite input");
  bool swapped = false;
  ThinSvd thin = decompose(m, swapped);
  // For swapped input, M^T = W S Z^T so M = Z S W^T.
  const std::vector<Column>& left = swapped ? thin.v : thin.u;
  const std::vector<Column>& right = swapped ? thin.u : thin.v;

  Svd out{Mat(m.rows(), r), Vec(r), Mat(m.cols(), r)};
  for (std::size_t j = 0; j < r; ++j) {
    const Column& u = left[j];
    const Column& v = right[j];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
      if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
    const double sign = u[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) out.U(i, j) = sign * u[i];
    for (std::size_t i = 0; i < m.cols(); ++i) out.V(i, j) = sign * v[i];
    out.S[j] = thin.s[j];
  }
  return out;
}

Vec singular_values(const Mat& m) {
  bool swapped = false;
  return Vec(decompose(m, swapped).s);
}

}  // namespace fedlora
