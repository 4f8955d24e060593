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
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedlora/error.hpp"
#include "fedlora/experiment.hpp"

namespace fedlora {
namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> cell(const CsvTable& t, const std::vector<std::string>& row,
                           std::string_view column) {
  const auto it = std::find(t.header.begin(), t.header.end(), column);
  if (it == t.header.end()) return std::nullopt;
  const auto& text = row[static_cast<std::size_t>(it - t.header.begin())];
  if (text.empty()) return std::nullopt;
  try {
    return std::stod(text);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kSchemaMismatch, "non-numeric " + std::string(column) + " '" + text + "'");
  }
}

// Mean and sample standard deviation when every seed has the value.
void mean_std(const std::vector<std::optional<double>>& xs, std::optional<double>& mean,
              std::optional<double>& stddev) {
  if (xs.empty() || std::any_of(xs.begin(), xs.end(), [](const auto& x) { return !x; })) return;
  double sum = 0.0;
  for (const auto& x : xs) sum += *x;
  const double mu = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (const auto& x : xs) ss += (*x - mu) * (*x - mu);
  mean = mu;
  stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kSchemaMismatch, "empty CSV");
  t.header = split_row(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_row(line);
    if (row.size() != t.header.size())
      throw Error(ErrorKind::kSchemaMismatch, "row width differs from header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  return read_csv(in);
}

std::vector<SummaryRow> summarize(const std::vector<LabeledTrace>& traces) {
  if (traces.empty()) return {};
  const auto& header = traces.front().table.header;
  if (std::find(header.begin(), header.end(), "global_loss") == header.end())
    throw Error(ErrorKind::kSchemaMismatch, "traces lack a global_loss column");
  std::vector<std::string> order;
  for (const LabeledTrace& t : traces) {
    if (t.table.header != header) throw Error(ErrorKind::kSchemaMismatch, "trace headers differ");
    if (t.table.rows.empty()) throw Error(ErrorKind::kSchemaMismatch, "empty trace for " + t.strategy);
    if (std::find(order.begin(), order.end(), t.strategy) == order.end()) order.push_back(t.strategy);
  }
  std::vector<SummaryRow> out;
  for (const std::string& name : order) {
    std::vector<std::optional<double>> loss, acc, angle;
    for (const LabeledTrace& t : traces) {
      if (t.strategy != name) continue;
      const auto& last = t.table.rows.back();
      loss.push_back(cell(t.table, last, "global_loss"));
      acc.push_back(cell(t.table, last, "test_accuracy"));
      angle.push_back(cell(t.table, last, "angle_distance"));
    }
    SummaryRow row;
    row.strategy = name;
    row.seeds = loss.size();
    mean_std(loss, row.loss_mean, row.loss_std);
    mean_std(acc, row.accuracy_mean, row.accuracy_std);
    mean_std(angle, row.angle_mean, row.angle_std);
    out.push_back(row);
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << kSummaryCsvHeader << '\n';
  for (const SummaryRow& r : rows) {
    out << r.strategy << ',' << r.seeds << ',' << opt(r.loss_mean) << ',' << opt(r.loss_std) << ','
        << opt(r.accuracy_mean) << ',' << opt(r.accuracy_std) << ',' << opt(r.angle_mean) << ','
        << opt(r.angle_std) << '\n';
  }
}

}  // namespace fedlora
