// SPDX-License-Identifier: Apache-2.0

#include "mvitac/config.hpp"

#include <charconv>
#include <fstream>

#include "mvitac/error.hpp"

using nlohmann::json;

namespace mvitac {

namespace {

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

void check_keys(const json& given, const json& reference, const std::string& path) {
  if (!given.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    const auto it = reference.find(key);
    if (it == reference.end()) throw ConfigError("unknown configuration key '" + here + "'");
    check_keys(value, *it, here);
  }
}

void collect_leaves(const json& j, const std::string& path, std::vector<std::string>& out) {
  if (j.is_object() && !j.empty()) {
    for (const auto& [key, value] : j.items()) collect_leaves(value, path.empty() ? key : path + "." + key, out);
  } else {
    out.push_back(path);
  }
}

}  // namespace

void to_json(json& j, const ConvBlockConfig& c) {
  j = {{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}, {"padding", c.padding}};
}
void from_json(const json& j, ConvBlockConfig& c) {
  read(j, "filters", c.filters);
  read(j, "kernel", c.kernel);
  read(j, "stride", c.stride);
  read(j, "padding", c.padding);
}

void to_json(json& j, const EncoderConfig& c) {
  j = {{"in_channels", c.in_channels}, {"input_size", c.input_size}, {"blocks", c.blocks},
       {"backbone_dim", c.backbone_dim}};
}
void from_json(const json& j, EncoderConfig& c) {
  read(j, "in_channels", c.in_channels);
  read(j, "input_size", c.input_size);
  read(j, "blocks", c.blocks);
  read(j, "backbone_dim", c.backbone_dim);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"visual", c.visual}, {"tactile", c.tactile}, {"hidden_dim", c.hidden_dim}, {"embed_dim", c.embed_dim}};
}
void from_json(const json& j, ModelConfig& c) {
  read(j, "visual", c.visual);
  read(j, "tactile", c.tactile);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "embed_dim", c.embed_dim);
}

void to_json(json& j, const Normalization& c) { j = {{"mean", c.mean}, {"std", c.std}}; }
void from_json(const json& j, Normalization& c) {
  read(j, "mean", c.mean);
  read(j, "std", c.std);
}

void to_json(json& j, const AugmentationConfig& c) {
  j = {{"resize_to", c.resize_to},
       {"crop_to", c.crop_to},
       {"crop_scale_min", c.crop_scale_min},
       {"crop_scale_max", c.crop_scale_max},
       {"hflip_prob", c.hflip_prob},
       {"grayscale_prob", c.grayscale_prob},
       {"visual_norm", c.visual_norm},
       {"tactile_norm", c.tactile_norm},
       {"grasp_mode", c.grasp_mode}};
}
void from_json(const json& j, AugmentationConfig& c) {
  read(j, "resize_to", c.resize_to);
  read(j, "crop_to", c.crop_to);
  read(j, "crop_scale_min", c.crop_scale_min);
  read(j, "crop_scale_max", c.crop_scale_max);
  read(j, "hflip_prob", c.hflip_prob);
  read(j, "grayscale_prob", c.grayscale_prob);
  read(j, "visual_norm", c.visual_norm);
  read(j, "tactile_norm", c.tactile_norm);
  read(j, "grasp_mode", c.grasp_mode);
}

void to_json(json& j, const LossWeights& c) { j = {{"tau", c.tau}, {"lambda_inter", c.lambda_inter}}; }
void from_json(const json& j, LossWeights& c) {
  read(j, "tau", c.tau);
  read(j, "lambda_inter", c.lambda_inter);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},         {"beta1", c.beta1},       {"beta2", c.beta2},
       {"epsilon", c.epsilon}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
       {"momentum", c.momentum}, {"loss", c.loss}};
}
void from_json(const json& j, TrainConfig& c) {
  read(j, "lr", c.lr);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "momentum", c.momentum);
  read(j, "loss", c.loss);
}

void to_json(json& j, const ProbeConfig& c) {
  j = {{"input", to_string(c.input)}, {"dropout_prob", c.dropout_prob}, {"class_count", c.class_count},
       {"lr", c.lr},                  {"epochs", c.epochs},             {"batch_size", c.batch_size},
       {"standardize", c.standardize}};
}
void from_json(const json& j, ProbeConfig& c) {
  if (auto it = j.find("input"); it != j.end()) c.input = parse_probe_input(it->get<std::string>());
  read(j, "dropout_prob", c.dropout_prob);
  read(j, "class_count", c.class_count);
  read(j, "lr", c.lr);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "standardize", c.standardize);
}

void to_json(json& j, const SynthSpec& c) {
  j = {{"class_count", c.class_count}, {"samples_per_class", c.samples_per_class}, {"image_size", c.image_size},
       {"noise_std", c.noise_std},     {"test_fraction", c.test_fraction}};
}
void from_json(const json& j, SynthSpec& c) {
  read(j, "class_count", c.class_count);
  read(j, "samples_per_class", c.samples_per_class);
  read(j, "image_size", c.image_size);
  read(j, "noise_std", c.noise_std);
  read(j, "test_fraction", c.test_fraction);
}

RunConfig RunConfig::paper_scale() {
  RunConfig c;
  c.model.visual = EncoderConfig::paper_scale(3);
  c.model.tactile = EncoderConfig::paper_scale(3);
  c.augment = AugmentationConfig::paper_scale();
  c.train.lr = 0.03;
  c.train.batch_size = 256;
  c.train.epochs = 240;
  c.probe.epochs = 60;
  c.probe.batch_size = 256;
  return c;
}

void to_json(json& j, const RunConfig& c) {
  j = {{"model", c.model}, {"augment", c.augment}, {"synth", c.synth}, {"train", c.train},
       {"probe", c.probe}, {"seed", c.seed},       {"data", c.data},   {"out", c.out}};
}
void from_json(const json& j, RunConfig& c) {
  read(j, "model", c.model);
  read(j, "augment", c.augment);
  read(j, "synth", c.synth);
  read(j, "train", c.train);
  read(j, "probe", c.probe);
  read(j, "seed", c.seed);
  read(j, "data", c.data);
  read(j, "out", c.out);
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.probe.seed = c.seed;
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, json(RunConfig{}), "");
  try {
    return j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::vector<std::string> config_leaf_paths() {
  std::vector<std::string> out;
  collect_leaves(json(RunConfig{}), "", out);
  return out;
}

void apply_override(json& config, const std::string& dotted_path, const std::string& value) {
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown configuration key '" + dotted_path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const auto bad = [&] { return ConfigError("invalid value '" + value + "' for " + dotted_path); };
  try {
    if (node->is_boolean()) {
      if (value == "true" || value == "1") *node = true;
      else if (value == "false" || value == "0") *node = false;
      else throw bad();
    } else if (node->is_number_unsigned() || node->is_number_integer()) {
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) throw bad();
      *node = v;
    } else if (node->is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw bad();
      *node = v;
    } else if (node->is_string()) {
      *node = value;
    } else {
      *node = json::parse(value);
    }
  } catch (const std::invalid_argument&) {
    throw bad();
  } catch (const std::out_of_range&) {
    throw bad();
  } catch (const json::exception&) {
    throw bad();
  }
}

}  // namespace mvitac
