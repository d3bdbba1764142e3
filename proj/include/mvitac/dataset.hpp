// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvitac/image.hpp"

namespace mvitac {

enum class Modality { visual, tactile };

enum class Task { category = 0, hard_soft = 1, rough_smooth = 2, grasp = 3 };
inline constexpr std::size_t kTaskCount = 4;

enum class Split { unassigned, train, test };

enum class Layout { pair, grasp };

const char* to_string(Task task);
const char* to_string(Layout layout);
Task parse_task(const std::string& name);

struct PairedSample {
  std::string stem;
  Image visual;
  Image tactile;  // 3 channels, or 6 for stacked grasp pairs
  std::array<std::optional<int>, kTaskCount> labels{};
  Split split = Split::unassigned;

  std::optional<int> label(Task task) const { return labels[static_cast<std::size_t>(task)]; }
  void set_label(Task task, int value) { labels[static_cast<std::size_t>(task)] = value; }
};

struct PairedDataset {
  Layout layout = Layout::pair;
  std::vector<PairedSample> samples;
  std::size_t skipped = 0;  // incomplete pairs/attempts ignored by the loader

  std::size_t size() const { return samples.size(); }
  std::size_t tactile_channels() const { return samples.empty() ? 0 : samples.front().tactile.channels; }
};

// root/visual/<stem>.png, root/tactile/<stem>.png, root/labels.csv
// (stem,category,hard_soft,rough_smooth) and optional root/split.csv (stem,split).
PairedDataset load_pair_dataset(const std::filesystem::path& root);

// root/<attempt>/{rgb_during.png, tac_left_during.png, tac_right_during.png, label.txt}.
// Tactile images are stacked [left; right] into 6 channels.
PairedDataset load_grasp_dataset(const std::filesystem::path& root);

// Pair layout when labels.csv exists, grasp layout when some subdirectory holds
// rgb_during.png; otherwise DatasetFormatError.
Layout detect_layout(const std::filesystem::path& root);
PairedDataset load_dataset(const std::filesystem::path& root);

// Writes the pair layout (PNG images, labels.csv and split.csv).
void export_pair_dataset(const PairedDataset& dataset, const std::filesystem::path& root);

// Indices of samples in `split`. When the dataset carries no split assignment
// a seeded 80/20 train/test partition is used.
std::vector<std::size_t> split_indices(const PairedDataset& dataset, Split split, std::uint64_t seed);

// Number of classes for `task`: 1 + the largest label present.
std::size_t class_count(const PairedDataset& dataset, Task task);

// Deterministic epoch permutations in fixed-size index batches.
class Batcher {
 public:
  Batcher(std::size_t dataset_size, std::size_t batch_size, std::uint64_t shuffle_seed, bool drop_last = true);

  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  bool drop_last_;
};

}  // namespace mvitac
