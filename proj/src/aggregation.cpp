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
#include <cctype>
#include <string>

#include "fedlora/error.hpp"
#include "fedlora/fed.hpp"
#include "fedlora/svd.hpp"

namespace fedlora {
namespace {

void check_shapes(std::span<const LoraAdapter> locals) {
  if (locals.empty()) throw Error(ErrorKind::kInvalidArgument, "no client adapters");
  const LoraAdapter& first = locals.front();
  first.validate();
  for (const LoraAdapter& ad : locals) {
    if (ad.A.rows() != first.A.rows() || ad.A.cols() != first.A.cols() ||
        ad.B.rows() != first.B.rows() || ad.B.cols() != first.B.cols()) {
      throw Error(ErrorKind::kShapeMismatch, "client adapters differ in shape");
    }
    if (ad.alpha != first.alpha)
      throw Error(ErrorKind::kShapeMismatch, "client adapters differ in alpha");
  }
}

// Sum in client-index order, then scale once. Identical inputs are returned
// as is: (N x) / N need not round back to x.
template <typename Get>
Mat mean_of(std::span<const LoraAdapter> locals, Get get) {
  const Mat first = get(locals.front());
  Mat sum = first;
  bool identical = true;
  for (std::size_t i = 1; i < locals.size(); ++i) {
    const Mat next = get(locals[i]);
    identical = identical && next == first;
    sum += next;
  }
  if (identical) return first;
  sum *= 1.0 / static_cast<double>(locals.size());
  return sum;
}

Mat mean_product(std::span<const LoraAdapter> locals) {
  return mean_of(locals, [](const LoraAdapter& ad) { return effective_update(ad); });
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRoLoRA: return "RoLoRA";
    case StrategyKind::kFfaLoRA: return "FFA-LoRA";
    case StrategyKind::kFedAvgLoRA: return "FedAvgLoRA";
    case StrategyKind::kFlexLoRA: return "FlexLoRA";
    case StrategyKind::kFLoRA: return "FLoRA";
  }
  return "?";
}

std::optional<StrategyKind> parse_strategy(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string key = lower(text);
  for (StrategyKind k : {StrategyKind::kRoLoRA, StrategyKind::kFfaLoRA, StrategyKind::kFedAvgLoRA,
                         StrategyKind::kFlexLoRA, StrategyKind::kFLoRA}) {
    if (key == lower(to_string(k))) return k;
  }
  if (key == "lora" || key == "fedavg") return StrategyKind::kFedAvgLoRA;
  if (key == "ffa") return StrategyKind::kFfaLoRA;
  return std::nullopt;
}

UpdateSchedule default_schedule(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRoLoRA: return UpdateSchedule::alternating();
    case StrategyKind::kFfaLoRA: return UpdateSchedule::freeze_a();
    default: return UpdateSchedule::train_both();
  }
}

void validate_schedule(StrategyKind kind, const UpdateSchedule& schedule) {
  const auto& p = schedule.pattern();
  auto all = [&](TrainMask m) { return std::all_of(p.begin(), p.end(), [m](TrainMask x) { return x == m; }); };
  bool ok = false;
  switch (kind) {
    case StrategyKind::kRoLoRA:
      ok = std::none_of(p.begin(), p.end(), [](TrainMask x) { return x == TrainMask::kTrainBoth; });
      break;
    case StrategyKind::kFfaLoRA: ok = all(TrainMask::kTrainB); break;
    default: ok = all(TrainMask::kTrainBoth); break;
  }
  if (!ok) {
    throw Error(ErrorKind::kBadSpec, "schedule " + schedule.to_string() + " is not valid for " +
                                         std::string(to_string(kind)));
  }
}

LoraAdapter aggregate_rolora(std::span<const LoraAdapter> locals, TrainMask mask) {
  check_shapes(locals);
  if (mask == TrainMask::kTrainBoth)
    throw Error(ErrorKind::kBadSpec, "alternating aggregation needs a frozen factor");
  const bool a_frozen = mask == TrainMask::kTrainB;
  const Mat& frozen0 = a_frozen ? locals.front().A : locals.front().B;
  for (std::size_t i = 1; i < locals.size(); ++i) {
    const Mat& frozen = a_frozen ? locals[i].A : locals[i].B;
    if (max_abs_diff(frozen, frozen0) > kFrozenTolerance) {
      throw Error(ErrorKind::kFrozenFactorMismatch,
                  std::string("client ") + std::to_string(i) + " modified frozen factor " +
                      (a_frozen ? "A" : "B"));
    }
  }
  LoraAdapter out = locals.front();
  if (a_frozen) {
    out.B = mean_of(locals, [](const LoraAdapter& ad) { return ad.B; });
  } else {
    out.A = mean_of(locals, [](const LoraAdapter& ad) { return ad.A; });
  }
  return out;
}

LoraAdapter aggregate_fedavg(std::span<const LoraAdapter> locals) {
  check_shapes(locals);
  LoraAdapter out;
  out.alpha = locals.front().alpha;
  out.A = mean_of(locals, [](const LoraAdapter& ad) { return ad.A; });
  out.B = mean_of(locals, [](const LoraAdapter& ad) { return ad.B; });
  return out;
}

double interference_gap(std::span<const LoraAdapter> locals) {
  const LoraAdapter avg = aggregate_fedavg(locals);
  return frob_norm(mean_product(locals) - effective_update(avg));
}

LoraAdapter aggregate_flexlora(std::span<const LoraAdapter> locals, std::size_t r) {
  check_shapes(locals);
  const double alpha = locals.front().alpha;
  const Svd svd = truncated_svd(mean_product(locals), r);
  LoraAdapter out;
  out.alpha = alpha;
  out.A = svd.U;
  for (std::size_t i = 0; i < out.A.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) out.A(i, k) *= svd.S[k] / alpha;
  out.B = svd.V.transposed();
  return out;
}

LoraAdapter aggregate_flora(std::span<const LoraAdapter> locals) {
  check_shapes(locals);
  std::vector<Mat> as, bs;
  for (const LoraAdapter& ad : locals) {
    as.push_back(ad.A);
    bs.push_back(ad.B);
  }
  LoraAdapter out;
  out.alpha = locals.front().alpha;
  out.A = hstack(as);
  out.B = vstack(bs);
  out.B *= 1.0 / static_cast<double>(locals.size());
  return out;
}

}  // namespace fedlora
