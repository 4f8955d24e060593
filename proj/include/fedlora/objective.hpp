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

#ifndef FEDLORA_OBJECTIVE_HPP_
#define FEDLORA_OBJECTIVE_HPP_

#include <cstddef>
#include <optional>
#include <span>

#include "fedlora/linalg.hpp"
#include "fedlora/lora.hpp"

namespace fedlora {

// Frozen base weight plus adapter: W = base + alpha * A * B. An empty base
// means zero.
struct GlobalModel {
  Mat base;
  LoraAdapter adapter;

  Mat effective_weight() const;
  bool operator==(const GlobalModel&) const = default;
};

struct FactorGrads {
  std::optional<Mat> dA;
  std::optional<Mat> dB;
};

// One client's differentiable local loss.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;

  // Rows available for minibatching; 0 means the objective is evaluated
  // exactly (population losses) and batches are ignored.
  virtual std::size_t num_samples() const = 0;
  virtual double loss(const GlobalModel& model) const = 0;
  // Gradient over `rows` (all rows when empty) for the unfrozen factor(s).
  virtual FactorGrads gradient(const GlobalModel& model, TrainMask mask,
                               std::span<const std::size_t> rows) const = 0;

  // Closed-form minimizer over B with A fixed, when one exists.
  virtual bool has_exact_b() const { return false; }
  virtual Mat exact_b(const GlobalModel& model) const;
};

}  // namespace fedlora

#endif  // FEDLORA_OBJECTIVE_HPP_
