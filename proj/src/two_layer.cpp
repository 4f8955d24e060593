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

#include "fedlora/two_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedlora/error.hpp"

namespace fedlora {
namespace {

void check_net(const TwoLayerNet& net) {
  net.adapter.validate();
  if (net.adapter.dim() != net.w_out.rows())
    throw Error(ErrorKind::kShapeMismatch, "adapter dim does not match W_out rows");
  if (!net.base.empty() && (net.base.rows() != net.dim() || net.base.cols() != net.dim()))
    throw Error(ErrorKind::kShapeMismatch, "base weight must be d x d");
}

Mat gather_rows(const Mat& m, std::span<const std::size_t> rows) {
  Mat out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

struct Forward {
  Mat z;       // X A        (n x r)
  Mat pre;     // X W        (n x d)
  Mat hidden;  // ReLU(pre)  (n x d)
  Mat logits;  // hidden W_out
};

Forward run_forward(const TwoLayerNet& net, const Mat& x) {
  if (x.cols() != net.dim())
    throw Error(ErrorKind::kShapeMismatch, "feature dim " + std::to_string(x.cols()) +
                                               " != model dim " + std::to_string(net.dim()));
  Forward f;
  f.z = matmul(x, net.adapter.A);
  f.pre = matmul(f.z, net.adapter.B);
  if (net.adapter.alpha != 1.0) f.pre *= net.adapter.alpha;
  if (!net.base.empty()) f.pre += matmul(x, net.base);
  f.hidden = f.pre;
  for (double& v : f.hidden.data()) v = v > 0.0 ? v : 0.0;
  f.logits = matmul(f.hidden, net.w_out);
  return f;
}

// Row-wise softmax probabilities and the mean cross-entropy.
double softmax_xent(const Mat& logits, std::span<const int> labels, Mat* probs) {
  double total = 0.0;
  if (probs) *probs = Mat(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[static_cast<std::size_t>(labels[i])];
    if (probs) {
      for (std::size_t j = 0; j < row.size(); ++j) (*probs)(i, j) = std::exp(row[j] - log_z);
    }
  }
  return logits.rows() ? total / static_cast<double>(logits.rows()) : 0.0;
}

struct Batch {
  Mat x;
  std::vector<int> labels;
};

Batch select(const LabeledShard& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return {data.features, data.labels};
  Batch b{gather_rows(data.features, rows), {}};
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) b.labels.push_back(data.labels[r]);
  return b;
}

}  // namespace

void LabeledShard::validate() const {
  if (features.rows() != labels.size())
    throw Error(ErrorKind::kShapeMismatch, "features and labels disagree in length");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw Error(ErrorKind::kShapeMismatch, "label out of range: " + std::to_string(y));
}

Vec forward_two_layer(const TwoLayerNet& net, const Vec& x) {
  check_net(net);
  return run_forward(net, Mat::row(x)).logits.row_vec(0);
}

Mat forward_batch(const TwoLayerNet& net, const Mat& features) {
  check_net(net);
  return run_forward(net, features).logits;
}

double cross_entropy_loss(const TwoLayerNet& net, const LabeledShard& batch,
                          std::span<const std::size_t> rows) {
  check_net(net);
  const Batch b = select(batch, rows);
  return softmax_xent(run_forward(net, b.x).logits, b.labels, nullptr);
}

FactorGrads grad_two_layer(const TwoLayerNet& net, const LabeledShard& batch, TrainMask mask,
                           std::span<const std::size_t> rows) {
  check_net(net);
  const Batch b = select(batch, rows);
  const Forward f = run_forward(net, b.x);
  Mat dlogits;
  softmax_xent(f.logits, b.labels, &dlogits);
  const double inv_n = 1.0 / static_cast<double>(b.labels.size());
  for (std::size_t i = 0; i < b.labels.size(); ++i)
    dlogits(i, static_cast<std::size_t>(b.labels[i])) -= 1.0;
  dlogits *= inv_n;

  // dPre = (dLogits W_out^T) masked by the ReLU.
  Mat dpre = matmul(dlogits, net.w_out.transposed());
  for (std::size_t k = 0; k < dpre.size(); ++k)
    if (!(f.pre.data()[k] > 0.0)) dpre.data()[k] = 0.0;

  const double alpha = net.adapter.alpha;
  FactorGrads out;
  if (mask != TrainMask::kTrainA) {
    out.dB = matmul(f.z.transposed(), dpre);  // r x d
    if (alpha != 1.0) *out.dB *= alpha;
  }
  if (mask != TrainMask::kTrainB) {
    Mat dz = matmul(dpre, net.adapter.B.transposed());  // n x r
    out.dA = matmul(b.x.transposed(), dz);               // d x r
    if (alpha != 1.0) *out.dA *= alpha;
  }
  return out;
}

double accuracy(const TwoLayerNet& net, const LabeledShard& data) {
  if (data.size() == 0) return 0.0;
  const Mat logits = forward_batch(net, data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row_span(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ClassifierObjective::ClassifierObjective(Mat w_out, LabeledShard shard)
    : w_out_(std::move(w_out)), shard_(std::move(shard)) {
  shard_.validate();
  if (shard_.features.cols() != w_out_.rows() && shard_.size() > 0)
    throw Error(ErrorKind::kShapeMismatch, "feature dim does not match W_out");
}

TwoLayerNet ClassifierObjective::view(const GlobalModel& model) const {
  return TwoLayerNet{w_out_, model.adapter, model.base};
}

double ClassifierObjective::loss(const GlobalModel& model) const {
  return cross_entropy_loss(view(model), shard_);
}

FactorGrads ClassifierObjective::gradient(const GlobalModel& model, TrainMask mask,
                                          std::span<const std::size_t> rows) const {
  return grad_two_layer(view(model), shard_, mask, rows);
}

}  // namespace fedlora
