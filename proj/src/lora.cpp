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

#include "fedlora/lora.hpp"

#include <cmath>
#include <string>

#include "fedlora/error.hpp"

namespace fedlora {

void LoraAdapter::validate() const {
  if (A.cols() != B.rows() || A.rows() != B.cols()) {
    throw Error(ErrorKind::kShapeMismatch,
                "adapter A is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                    ", B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  }
}

Mat effective_update(const LoraAdapter& adapter) {
  adapter.validate();
  Mat w = matmul(adapter.A, adapter.B);
  if (adapter.alpha != 1.0) w *= adapter.alpha;
  return w;
}

std::string_view to_string(TrainMask mask) {
  switch (mask) {
    case TrainMask::kTrainB: return "B";
    case TrainMask::kTrainA: return "A";
    case TrainMask::kTrainBoth: return "AB";
  }
  return "?";
}

std::optional<TrainMask> parse_train_mask(std::string_view text) {
  if (text == "B" || text == "b") return TrainMask::kTrainB;
  if (text == "A" || text == "a") return TrainMask::kTrainA;
  if (text == "AB" || text == "ab" || text == "both" || text == "BA") return TrainMask::kTrainBoth;
  return std::nullopt;
}

UpdateSchedule::UpdateSchedule(std::vector<TrainMask> pattern, bool repeat)
    : pattern_(std::move(pattern)), repeat_(repeat) {
  if (pattern_.empty()) throw Error(ErrorKind::kBadSpec, "update schedule pattern is empty");
}

UpdateSchedule UpdateSchedule::alternating() {
  return UpdateSchedule({TrainMask::kTrainB, TrainMask::kTrainA}, true);
}

UpdateSchedule UpdateSchedule::freeze_a() { return UpdateSchedule({TrainMask::kTrainB}, true); }

UpdateSchedule UpdateSchedule::train_both() {
  return UpdateSchedule({TrainMask::kTrainBoth}, true);
}

UpdateSchedule UpdateSchedule::alternate_then_freeze(std::size_t rounds) {
  std::vector<TrainMask> pattern;
  for (std::size_t t = 0; t < rounds; ++t)
    pattern.push_back(t % 2 == 0 ? TrainMask::kTrainB : TrainMask::kTrainA);
  pattern.push_back(TrainMask::kTrainB);
  return UpdateSchedule(std::move(pattern), false);
}

UpdateSchedule UpdateSchedule::parse(std::string_view text, bool repeat) {
  std::vector<TrainMask> pattern;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view token = text.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    auto mask = parse_train_mask(token);
    if (!mask) throw Error(ErrorKind::kBadSpec, "bad schedule entry '" + std::string(token) + "'");
    pattern.push_back(*mask);
    start = end + 1;
  }
  return UpdateSchedule(std::move(pattern), repeat);
}

TrainMask UpdateSchedule::mask(std::size_t round) const {
  if (repeat_) return pattern_[round % pattern_.size()];
  return pattern_[std::min(round, pattern_.size() - 1)];
}

std::string UpdateSchedule::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < pattern_.size(); ++i) {
    if (i) out += ',';
    out += fedlora::to_string(pattern_[i]);
  }
  return out;
}

TrainMask trainable_mask(const UpdateSchedule& schedule, std::size_t round) {
  return schedule.mask(round);
}

LoraAdapter init_adapter(const InitSpec& spec, std::size_t d, std::size_t r) {
  if (r < 1 || d < r) {
    throw Error(ErrorKind::kBadSpec,
                "need d >= r >= 1, got d=" + std::to_string(d) + " r=" + std::to_string(r));
  }
  if (!(spec.alpha > 0.0)) throw Error(ErrorKind::kBadSpec, "alpha must be positive");
  Rng rng(spec.seed);
  LoraAdapter out;
  out.alpha = spec.alpha;
  switch (spec.a_init) {
    case InitSpec::AInit::kGaussianUnit: {
      out.A = Mat(d, r);
      for (std::size_t j = 0; j < r; ++j) out.A.set_col(j, random_unit_vector(rng, d));
      break;
    }
    case InitSpec::AInit::kGaussian: {
      const double std = spec.a_std > 0.0 ? spec.a_std : 1.0 / std::sqrt(static_cast<double>(d));
      out.A = gaussian_matrix(rng, d, r);
      out.A *= std;
      break;
    }
    case InitSpec::AInit::kGiven:
      if (!spec.a_given || spec.a_given->rows() != d || spec.a_given->cols() != r)
        throw Error(ErrorKind::kBadSpec, "given A missing or wrong shape");
      out.A = *spec.a_given;
      break;
  }
  switch (spec.b_init) {
    case InitSpec::BInit::kZero:
      out.B = Mat(r, d);
      break;
    case InitSpec::BInit::kGaussian: {
      const double std = spec.b_std > 0.0 ? spec.b_std : 1.0 / std::sqrt(static_cast<double>(d));
      out.B = gaussian_matrix(rng, r, d);
      out.B *= std;
      break;
    }
    case InitSpec::BInit::kGiven:
      if (!spec.b_given || spec.b_given->rows() != r || spec.b_given->cols() != d)
        throw Error(ErrorKind::kBadSpec, "given B missing or wrong shape");
      out.B = *spec.b_given;
      break;
  }
  return out;
}

Vec init_with_angle(const Vec& a_star, double delta0, Rng& rng) {
  if (std::abs(norm(a_star) - 1.0) > kUnitTolerance)
    throw Error(ErrorKind::kNotUnit, "init_with_angle: a_star must be unit");
  if (!(delta0 > 0.0 && delta0 < 1.0))
    throw Error(ErrorKind::kBadAngle, "delta0 must lie in (0, 1), got " + std::to_string(delta0));
  if (a_star.dim() < 2) throw Error(ErrorKind::kBadAngle, "need d >= 2 for a nonzero angle");
  Vec w;
  for (;;) {
    w = gaussian_vector(rng, a_star.dim());
    w -= dot(w, a_star) * a_star;
    // second pass for orthogonality to machine precision
    w -= dot(w, a_star) * a_star;
    if (norm(w) > 1e-6) break;
  }
  w = unit_normalize(w);
  Vec a0 = std::sqrt(1.0 - delta0 * delta0) * a_star;
  a0 += delta0 * w;
  return unit_normalize(a0);
}

}  // namespace fedlora
