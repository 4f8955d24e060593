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

#include "fedlora/linalg.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "fedlora/error.hpp"

namespace fedlora {
namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                    "x" + std::to_string(b.cols()));
  }
}

void require_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::kShapeMismatch, std::string(op) + ": dim " +
                                               std::to_string(a.dim()) + " vs " +
                                               std::to_string(b.dim()));
  }
}

void require_unit(const Vec& u, const char* op) {
  if (std::abs(norm(u) - 1.0) > kUnitTolerance) {
    throw Error(ErrorKind::kNotUnit, std::string(op) + ": norm " + std::to_string(norm(u)));
  }
}

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelMinWork = 1u << 15;

}  // namespace

Vec Vec::basis(std::size_t dim, std::size_t index) {
  Vec e(dim);
  e[index] = 1.0;
  return e;
}

Vec& Vec::operator+=(const Vec& other) {
  require_same_dim(*this, other, "Vec +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Vec& Vec::operator-=(const Vec& other) {
  require_same_dim(*this, other, "Vec -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Vec& Vec::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Vec operator+(Vec lhs, const Vec& rhs) { return lhs += rhs; }
Vec operator-(Vec lhs, const Vec& rhs) { return lhs -= rhs; }
Vec operator*(double s, Vec v) { return v *= s; }
Vec operator*(Vec v, double s) { return v *= s; }

double dot(const Vec& u, const Vec& v) {
  require_same_dim(u, v, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) acc += u[i] * v[i];
  return acc;
}

double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

bool all_finite(const Vec& v) {
  return std::all_of(v.data().begin(), v.data().end(),
                     [](double x) { return std::isfinite(x); });
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::kShapeMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::column(const Vec& v) {
  Mat m(v.dim(), 1);
  std::copy(v.data().begin(), v.data().end(), m.data_.begin());
  return m;
}

Mat Mat::row(const Vec& v) {
  Mat m(1, v.dim());
  std::copy(v.data().begin(), v.data().end(), m.data_.begin());
  return m;
}

Vec Mat::col_vec(std::size_t j) const {
  Vec v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

Vec Mat::row_vec(std::size_t i) const {
  auto r = row_span(i);
  return Vec(std::vector<double>(r.begin(), r.end()));
}

void Mat::set_col(std::size_t j, const Vec& v) {
  if (v.dim() != rows_) throw Error(ErrorKind::kShapeMismatch, "set_col");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Mat& Mat::operator+=(const Mat& other) {
  require_same_shape(*this, other, "Mat +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& other) {
  require_same_shape(*this, other, "Mat -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Mat operator+(Mat lhs, const Mat& rhs) { return lhs += rhs; }
Mat operator-(Mat lhs, const Mat& rhs) { return lhs -= rhs; }
Mat operator*(double s, Mat m) { return m *= s; }
Mat operator*(Mat m, double s) { return m *= s; }

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kShapeMismatch,
                "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Mat c(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  const bool go_parallel = n > 1 && n * inner * m >= kParallelMinWork && !omp_in_parallel();
  // i-k-j order: for a fixed (i, j) the sum still runs k = 0..inner-1.
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double* crow = pc + i * m;
    const double* arow = pa + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = pb + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Mat matmul_serial(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::kShapeMismatch, "matmul_serial");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

Vec matvec(const Mat& a, const Vec& x) {
  if (a.cols() != x.dim()) throw Error(ErrorKind::kShapeMismatch, "matvec");
  Vec y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    auto r = a.row_span(i);
    for (std::size_t k = 0; k < r.size(); ++k) acc += r[k] * x[k];
    y[i] = acc;
  }
  return y;
}

Vec matvec_transposed(const Mat& a, const Vec& x) {
  if (a.rows() != x.dim()) throw Error(ErrorKind::kShapeMismatch, "matvec_transposed");
  Vec y(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row_span(i);
    for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

Mat outer(const Vec& u, const Vec& v) {
  Mat m(u.dim(), v.dim());
  for (std::size_t i = 0; i < u.dim(); ++i)
    for (std::size_t j = 0; j < v.dim(); ++j) m(i, j) = u[i] * v[j];
  return m;
}

Mat hstack(std::span<const Mat> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const Mat& b : blocks) {
    if (b.rows() != rows) throw Error(ErrorKind::kShapeMismatch, "hstack");
    cols += b.cols();
  }
  Mat out(rows, cols);
  std::size_t offset = 0;
  for (const Mat& b : blocks) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
    offset += b.cols();
  }
  return out;
}

Mat vstack(std::span<const Mat> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const Mat& b : blocks) {
    if (b.cols() != cols) throw Error(ErrorKind::kShapeMismatch, "vstack");
    rows += b.rows();
  }
  Mat out(rows, cols);
  std::size_t offset = 0;
  for (const Mat& b : blocks) {
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + offset * cols);
    offset += b.rows();
  }
  return out;
}

double frob_norm(const Mat& m) {
  double acc = 0.0;
  for (double x : m.data()) acc += x * x;
  return std::sqrt(acc);
}

double max_abs_diff(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

bool all_finite(const Mat& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double x) { return std::isfinite(x); });
}

Vec unit_normalize(const Vec& v) {
  const double n = norm(v);
  if (!(n > kZeroTolerance)) {
    throw Error(ErrorKind::kZeroVector, "cannot normalize vector of norm " + std::to_string(n));
  }
  return (1.0 / n) * v;
}

double angle_distance(const Vec& u, const Vec& v) {
  require_same_dim(u, v, "angle_distance");
  require_unit(u, "angle_distance");
  require_unit(v, "angle_distance");
  const double c = dot(u, v);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    const double r = v[i] - c * u[i];
    acc += r * r;
  }
  return std::min(1.0, std::sqrt(acc));
}

Mat projector_orth(const Vec& u) {
  require_unit(u, "projector_orth");
  Mat p = Mat::identity(u.dim());
  p -= outer(u, u);
  return p;
}

}  // namespace fedlora
