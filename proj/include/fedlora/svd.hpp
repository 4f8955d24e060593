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

#ifndef FEDLORA_SVD_HPP_
#define FEDLORA_SVD_HPP_

#include <cstddef>

#include "fedlora/linalg.hpp"

namespace fedlora {

// M ~= U * diag(S) * V^T with U: rows x r, V: cols x r.
struct Svd {
  Mat U;
  Vec S;  // non-negative, non-increasing
  Mat V;

  Mat reconstruct() const;
};

inline constexpr int kSvdMaxSweeps = 200;

// Rank-r truncation of a one-sided (Hestenes) Jacobi SVD. Each left singular
// vector is sign-normalized so its largest-magnitude entry is non-negative.
// Throws RankTooLarge if r > min(rows, cols).
Svd truncated_svd(const Mat& m, std::size_t r);

// All min(rows, cols) singular values, non-increasing.
Vec singular_values(const Mat& m);

}  // namespace fedlora

#endif  // FEDLORA_SVD_HPP_
