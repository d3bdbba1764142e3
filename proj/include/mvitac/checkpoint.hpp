// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mvitac/model.hpp"

namespace mvitac {

inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'I', 'T', 'A', 'C', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

// On-disk layout:
//   8 bytes   magic "MVITAC01"
//   8 bytes   little-endian u64 header length L
//   L bytes   UTF-8 JSON header: format_version, model config, step, seeds,
//             metadata, and per-parameter {name, shape, offset, count}
//   ...       concatenated little-endian float32 blobs (offsets relative to here)
struct Checkpoint {
  int format_version = kCheckpointVersion;
  ModelConfig config;
  std::vector<NamedTensor> parameters;
  std::uint64_t step = 0;
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
};

Checkpoint make_checkpoint(const MViTacModel& model, std::uint64_t step = 0,
                           nlohmann::json seeds = nlohmann::json::object(),
                           nlohmann::json metadata = nlohmann::json::object());

// Writes to a temporary sibling and renames, so a crash never leaves a partial file.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
inline void save_checkpoint(const MViTacModel& model, const std::filesystem::path& path) {
  save_checkpoint(make_checkpoint(model), path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Builds a model with the checkpoint's configuration and parameter values.
MViTacModel model_from_checkpoint(const Checkpoint& checkpoint);
inline MViTacModel load_checkpoint(const std::filesystem::path& path) {
  return model_from_checkpoint(read_checkpoint(path));
}

}  // namespace mvitac
