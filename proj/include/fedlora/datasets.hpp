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

#ifndef FEDLORA_DATASETS_HPP_
#define FEDLORA_DATASETS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedlora/rng.hpp"
#include "fedlora/two_layer.hpp"

namespace fedlora {

// Gaussian class clusters. Class means live in a seeded `signal_dim`
// subspace of R^dim at distance `margin` from the origin; every sample adds
// isotropic N(0, noise^2) in all dim directions.
struct ClusterSpec {
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::size_t signal_dim = 8;
  double margin = 3.0;
  double noise = 1.0;
  bool operator==(const ClusterSpec&) const = default;
};

struct ClassificationData {
  LabeledShard train;
  LabeledShard test;
};

ClassificationData make_cluster_dataset(const ClusterSpec& spec, Rng& rng);

using Partition = std::vector<std::vector<std::size_t>>;

// Client k receives every sample whose label is in
// [k * labels_per_client, (k + 1) * labels_per_client). Throws BadPartition
// unless n_clients * labels_per_client == num_classes.
Partition label_partition(std::span<const int> labels, std::size_t num_classes,
                          std::size_t n_clients, std::size_t labels_per_client);

// Per class, client shares ~ Dirichlet(alpha); each sample assigned once.
Partition dirichlet_partition(std::span<const int> labels, std::size_t num_classes,
                              std::size_t n_clients, double alpha, Rng& rng);

LabeledShard take_rows(const LabeledShard& data, std::span<const std::size_t> rows);

std::vector<LabeledShard> split_by_label(const LabeledShard& data, std::size_t n_clients,
                                         std::size_t labels_per_client);
std::vector<LabeledShard> split_dirichlet(const LabeledShard& data, std::size_t n_clients,
                                          double alpha, Rng& rng);

// IDX files: big-endian magic 0x00000803 (images) or 0x00000801 (labels),
// then 32-bit big-endian dimension sizes, then unsigned bytes.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// One image per row, pixels scaled to [0, 1].
Mat parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
Mat read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

// Images + labels as a shard with num_classes = max label + 1.
LabeledShard read_idx_dataset(const std::filesystem::path& images,
                              const std::filesystem::path& labels);

}  // namespace fedlora

#endif  // FEDLORA_DATASETS_HPP_
