// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvitac/augment.hpp"
#include "mvitac/losses.hpp"
#include "mvitac/model.hpp"
#include "mvitac/probe.hpp"
#include "mvitac/synth.hpp"
#include "mvitac/train.hpp"

namespace mvitac {

void to_json(nlohmann::json& j, const ConvBlockConfig& c);
void from_json(const nlohmann::json& j, ConvBlockConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const Normalization& c);
void from_json(const nlohmann::json& j, Normalization& c);
void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);
void to_json(nlohmann::json& j, const SynthSpec& c);
void from_json(const nlohmann::json& j, SynthSpec& c);

// Everything a CLI run needs. Sourced from an optional JSON file, then
// overridden by flags addressing leaves with dotted paths (e.g. train.lr).
struct RunConfig {
  ModelConfig model;
  AugmentationConfig augment;
  SynthSpec synth;
  TrainConfig train;  // train.loss holds tau and lambda_inter
  ProbeConfig probe;
  std::uint64_t seed = 0;
  std::string data;
  std::string out;

  // 256/224 geometry, 512-d ResNet-scale features, batch 256, 240/60 epochs.
  static RunConfig paper_scale();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Rejects unknown keys so typos in config files fail loudly.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Every leaf path of the default configuration ("train.lr", "model.visual.input_size", ...).
std::vector<std::string> config_leaf_paths();

// Sets the leaf at `dotted_path` from its textual value, parsed according to the
// type of the existing value. Throws ConfigError for unknown paths or bad values.
void apply_override(nlohmann::json& config, const std::string& dotted_path, const std::string& value);

}  // namespace mvitac
