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

#ifndef FEDLORA_TWO_LAYER_HPP_
#define FEDLORA_TWO_LAYER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/objective.hpp"

namespace fedlora {

// Features (n x d) with class ids in [0, num_classes).
struct LabeledShard {
  Mat features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  void validate() const;
};

// logits = ReLU(x (base + alpha A B)) W_out. W_out is never trained.
struct TwoLayerNet {
  Mat w_out;  // d x c
  LoraAdapter adapter;
  Mat base;   // d x d or empty

  std::size_t dim() const noexcept { return w_out.rows(); }
  std::size_t num_classes() const noexcept { return w_out.cols(); }
};

Vec forward_two_layer(const TwoLayerNet& net, const Vec& x);
Mat forward_batch(const TwoLayerNet& net, const Mat& features);

// Mean softmax cross-entropy over `rows` (all rows when empty).
double cross_entropy_loss(const TwoLayerNet& net, const LabeledShard& batch,
                          std::span<const std::size_t> rows = {});

// Analytic gradient of cross_entropy_loss; the frozen factor is omitted.
FactorGrads grad_two_layer(const TwoLayerNet& net, const LabeledShard& batch, TrainMask mask,
                           std::span<const std::size_t> rows = {});

double accuracy(const TwoLayerNet& net, const LabeledShard& data);

class ClassifierObjective final : public LocalObjective {
 public:
  ClassifierObjective(Mat w_out, LabeledShard shard);

  const LabeledShard& shard() const noexcept { return shard_; }
  std::size_t num_samples() const override { return shard_.size(); }
  double loss(const GlobalModel& model) const override;
  FactorGrads gradient(const GlobalModel& model, TrainMask mask,
                       std::span<const std::size_t> rows) const override;

 private:
  TwoLayerNet view(const GlobalModel& model) const;

  Mat w_out_;
  LabeledShard shard_;
};

}  // namespace fedlora

#endif  // FEDLORA_TWO_LAYER_HPP_
