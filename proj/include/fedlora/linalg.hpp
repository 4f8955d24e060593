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

#ifndef FEDLORA_LINALG_HPP_
#define FEDLORA_LINALG_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedlora {

// Dense real vector.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  static Vec basis(std::size_t dim, std::size_t index);

  std::size_t dim() const noexcept { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Vec& operator+=(const Vec& other);
  Vec& operator-=(const Vec& other);
  Vec& operator*=(double s);

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> data_;
};

Vec operator+(Vec lhs, const Vec& rhs);
Vec operator-(Vec lhs, const Vec& rhs);
Vec operator*(double s, Vec v);
Vec operator*(Vec v, double s);

double dot(const Vec& u, const Vec& v);
double norm(const Vec& v);
bool all_finite(const Vec& v);

// Dense real matrix, row-major storage.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);
  static Mat column(const Vec& v);  // n x 1
  static Mat row(const Vec& v);     // 1 x n

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row_span(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row_span(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  Vec col_vec(std::size_t j) const;
  Vec row_vec(std::size_t i) const;
  void set_col(std::size_t j, const Vec& v);

  Mat transposed() const;

  Mat& operator+=(const Mat& other);
  Mat& operator-=(const Mat& other);
  Mat& operator*=(double s);

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Mat operator+(Mat lhs, const Mat& rhs);
Mat operator-(Mat lhs, const Mat& rhs);
Mat operator*(double s, Mat m);
Mat operator*(Mat m, double s);

// C = A * B. Rows of C are distributed over OpenMP threads when the product
// is large enough and no enclosing parallel region is active. Each entry is
// accumulated in the same k order as matmul_serial, so the two agree bitwise.
Mat matmul(const Mat& a, const Mat& b);
// Reference triple loop kept for testing and benchmarking.
Mat matmul_serial(const Mat& a, const Mat& b);

Vec matvec(const Mat& a, const Vec& x);
Vec matvec_transposed(const Mat& a, const Vec& x);  // A^T x
Mat outer(const Vec& u, const Vec& v);
Mat hstack(std::span<const Mat> blocks);
Mat vstack(std::span<const Mat> blocks);

double frob_norm(const Mat& m);
double max_abs_diff(const Mat& a, const Mat& b);
bool all_finite(const Mat& m);

// Vectors with norm at or below this are treated as zero.
inline constexpr double kZeroTolerance = 1e-14;
// Tolerance on ||u|| - 1 for unit-vector preconditions.
inline constexpr double kUnitTolerance = 1e-9;

Vec unit_normalize(const Vec& v);
// |sin theta(u, v)| = ||(I - u u^T) v|| for unit u, v.
double angle_distance(const Vec& u, const Vec& v);
// I - u u^T for unit u.
Mat projector_orth(const Vec& u);

}  // namespace fedlora

#endif  // FEDLORA_LINALG_HPP_
