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

#include <charconv>
#include <ostream>

#include "fedlora/fed.hpp"

namespace fedlora {

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << kTraceCsvHeader << '\n';
  for (const RoundRecord& r : trace.records) {
    out << r.round << ',' << to_string(r.trained) << ',' << format_double(r.global_loss) << ','
        << opt(r.angle_distance) << ',' << opt(r.test_accuracy) << ',' << opt(r.elapsed_ms)
        << '\n';
  }
}

}  // namespace fedlora
