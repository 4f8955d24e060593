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

#include "fedlora/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "fedlora/error.hpp"

namespace fedlora {
namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

void append_samples(LabeledShard& out, const std::vector<Vec>& centers, std::size_t per_class,
                    double noise, Rng& rng) {
  const std::size_t dim = centers.front().dim();
  const std::size_t classes = centers.size();
  out.features = Mat(per_class * classes, dim);
  out.labels.resize(per_class * classes);
  out.num_classes = classes;
  std::size_t row = 0;
  // Interleave classes so that any prefix is roughly balanced.
  for (std::size_t k = 0; k < per_class; ++k) {
    for (std::size_t c = 0; c < classes; ++c, ++row) {
      auto dst = out.features.row_span(row);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = centers[c][j] + noise * rng.normal();
      out.labels[row] = static_cast<int>(c);
    }
  }
}

std::vector<std::vector<std::size_t>> rows_by_class(std::span<const int> labels,
                                                    std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw Error(ErrorKind::kBadPartition, "label out of range: " + std::to_string(y));
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  return by_class;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw Error(ErrorKind::kIoError, "truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  std::fclose(f);
  return bytes;
}

}  // namespace

ClassificationData make_cluster_dataset(const ClusterSpec& spec, Rng& rng) {
  if (spec.classes < 2 || spec.dim == 0 || spec.signal_dim == 0 || spec.signal_dim > spec.dim)
    throw Error(ErrorKind::kBadSpec, "cluster spec needs classes >= 2 and 1 <= signal_dim <= dim");
  // Orthonormal basis of the signal subspace by Gram-Schmidt.
  std::vector<Vec> basis;
  while (basis.size() < spec.signal_dim) {
    Vec v = gaussian_vector(rng, spec.dim);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : basis) v -= dot(v, q) * q;
    if (norm(v) > 1e-6) basis.push_back(unit_normalize(v));
  }
  std::vector<Vec> centers;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const Vec coeff = random_unit_vector(rng, spec.signal_dim);
    Vec mu(spec.dim);
    for (std::size_t k = 0; k < spec.signal_dim; ++k) mu += coeff[k] * basis[k];
    centers.push_back(spec.margin * mu);
  }
  ClassificationData data;
  append_samples(data.train, centers, spec.train_per_class, spec.noise, rng);
  append_samples(data.test, centers, spec.test_per_class, spec.noise, rng);
  return data;
}

Partition label_partition(std::span<const int> labels, std::size_t num_classes,
                          std::size_t n_clients, std::size_t labels_per_client) {
  if (n_clients == 0 || labels_per_client == 0 || n_clients * labels_per_client != num_classes) {
    throw Error(ErrorKind::kBadPartition,
                std::to_string(n_clients) + " clients x " + std::to_string(labels_per_client) +
                    " labels != " + std::to_string(num_classes) + " classes");
  }
  const auto by_class = rows_by_class(labels, num_classes);
  Partition parts(n_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& dst = parts[c / labels_per_client];
    dst.insert(dst.end(), by_class[c].begin(), by_class[c].end());
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

Partition dirichlet_partition(std::span<const int> labels, std::size_t num_classes,
                              std::size_t n_clients, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::kBadPartition, "Dirichlet alpha must be positive");
  if (n_clients == 0) throw Error(ErrorKind::kBadPartition, "need at least one client");
  auto by_class = rows_by_class(labels, num_classes);
  Partition parts(n_clients);
  std::vector<double> share(n_clients);
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    double total = 0.0;
    for (double& s : share) total += (s = rng.gamma(alpha));
    // Cut points floor(n * cumulative share); the last client takes the rest.
    std::size_t begin = 0;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      cumulative += share[k] / total;
      std::size_t end = k + 1 == n_clients
                            ? rows.size()
                            : std::min(rows.size(), static_cast<std::size_t>(std::floor(
                                                        cumulative * static_cast<double>(rows.size()))));
      end = std::max(end, begin);
      parts[k].insert(parts[k].end(), rows.begin() + static_cast<std::ptrdiff_t>(begin),
                      rows.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

LabeledShard take_rows(const LabeledShard& data, std::span<const std::size_t> rows) {
  LabeledShard out;
  out.num_classes = data.num_classes;
  out.features = Mat(rows.size(), data.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = data.features.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row_span(i).begin());
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

std::vector<LabeledShard> split_by_label(const LabeledShard& data, std::size_t n_clients,
                                         std::size_t labels_per_client) {
  std::vector<LabeledShard> out;
  for (const auto& rows : label_partition(data.labels, data.num_classes, n_clients,
                                          labels_per_client))
    out.push_back(take_rows(data, rows));
  return out;
}

std::vector<LabeledShard> split_dirichlet(const LabeledShard& data, std::size_t n_clients,
                                          double alpha, Rng& rng) {
  std::vector<LabeledShard> out;
  for (const auto& rows : dirichlet_partition(data.labels, data.num_classes, n_clients, alpha, rng))
    out.push_back(take_rows(data, rows));
  return out;
}

Mat parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (read_be32(bytes, 0) != kIdxImageMagic) throw Error(ErrorKind::kIoError, "bad IDX image magic");
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  if (bytes.size() < 16 + n * pixels) throw Error(ErrorKind::kIoError, "truncated IDX image data");
  Mat out(n, pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) out.data()[i] = bytes[16 + i] / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (read_be32(bytes, 0) != kIdxLabelMagic) throw Error(ErrorKind::kIoError, "bad IDX label magic");
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() < 8 + n) throw Error(ErrorKind::kIoError, "truncated IDX label data");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = bytes[8 + i];
  return out;
}

Mat read_idx_images(const std::filesystem::path& path) { return parse_idx_images(slurp(path)); }

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(slurp(path));
}

LabeledShard read_idx_dataset(const std::filesystem::path& images,
                              const std::filesystem::path& labels) {
  LabeledShard out;
  out.features = read_idx_images(images);
  out.labels = read_idx_labels(labels);
  if (out.features.rows() != out.labels.size())
    throw Error(ErrorKind::kIoError, "image and label counts differ");
  int max_label = 0;
  for (int y : out.labels) max_label = std::max(max_label, y);
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

}  // namespace fedlora
