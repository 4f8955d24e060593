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

#ifndef FEDLORA_LORA_HPP_
#define FEDLORA_LORA_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

// Low-rank adapter: effective update alpha * A * B with A: d x r, B: r x d.
struct LoraAdapter {
  Mat A;
  Mat B;
  double alpha = 1.0;

  std::size_t dim() const noexcept { return A.rows(); }
  std::size_t rank() const noexcept { return A.cols(); }
  // Throws ShapeMismatch unless A.cols == B.rows and A.rows == B.cols.
  void validate() const;

  bool operator==(const LoraAdapter&) const = default;
};

Mat effective_update(const LoraAdapter& adapter);

enum class TrainMask { kTrainB, kTrainA, kTrainBoth };

std::string_view to_string(TrainMask mask);
// "B", "A" or "AB" (also accepts "both").
std::optional<TrainMask> parse_train_mask(std::string_view text);

// Which factor is trainable in each communication round. Round t uses
// pattern[t mod len] when repeating, otherwise pattern[min(t, len - 1)].
class UpdateSchedule {
 public:
  UpdateSchedule(std::vector<TrainMask> pattern, bool repeat);

  static UpdateSchedule alternating();  // [B, A], repeating
  static UpdateSchedule freeze_a();     // [B]
  static UpdateSchedule train_both();   // [AB]
  // Alternate for the first `rounds` rounds, then keep A frozen forever.
  static UpdateSchedule alternate_then_freeze(std::size_t rounds);
  // Comma separated masks, e.g. "B,B,B,A".
  static UpdateSchedule parse(std::string_view text, bool repeat = true);

  TrainMask mask(std::size_t round) const;
  const std::vector<TrainMask>& pattern() const noexcept { return pattern_; }
  bool repeat() const noexcept { return repeat_; }
  std::string to_string() const;

  bool operator==(const UpdateSchedule&) const = default;

 private:
  std::vector<TrainMask> pattern_;
  bool repeat_;
};

TrainMask trainable_mask(const UpdateSchedule& schedule, std::size_t round);

struct InitSpec {
  enum class AInit {
    kGaussianUnit,  // i.i.d. Gaussian columns scaled to unit norm
    kGaussian,      // i.i.d. N(0, a_std^2)
    kGiven,
  };
  enum class BInit { kZero, kGaussian, kGiven };

  AInit a_init = AInit::kGaussian;
  // Non-positive means 1/sqrt(d).
  double a_std = 0.0;
  BInit b_init = BInit::kZero;
  // Non-positive means 1/sqrt(d).
  double b_std = 0.0;
  std::optional<Mat> a_given;
  std::optional<Mat> b_given;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

// Deterministic in spec.seed. Throws BadSpec on inconsistent specs.
LoraAdapter init_adapter(const InitSpec& spec, std::size_t d, std::size_t r);

// Unit a0 with |sin theta(a0, a_star)| = delta0, built as
// sqrt(1 - delta0^2) a_star + delta0 w for a seeded unit w orthogonal to a_star.
Vec init_with_angle(const Vec& a_star, double delta0, Rng& rng);

}  // namespace fedlora

#endif  // FEDLORA_LORA_HPP_
