// SPDX-License-Identifier: Apache-2.0

#include "mvitac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include "mvitac/config.hpp"
#include "mvitac/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvitac {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(const fs::path& path, const std::string& what, std::uint64_t offset) {
  throw CheckpointError(CheckpointError::Kind::corrupt,
                        "corrupt checkpoint " + path.string() + " at byte " + std::to_string(offset) + ": " + what,
                        offset);
}

}  // namespace

Checkpoint make_checkpoint(const MViTacModel& model, std::uint64_t step, json seeds, json metadata) {
  Checkpoint c;
  c.config = model.config();
  c.parameters = model.parameters();
  c.step = step;
  c.seeds = std::move(seeds);
  c.metadata = std::move(metadata);
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  json header;
  header["format_version"] = checkpoint.format_version;
  header["model"] = checkpoint.config;
  header["step"] = checkpoint.step;
  header["seeds"] = checkpoint.seeds;
  header["metadata"] = checkpoint.metadata;
  json params = json::array();
  std::uint64_t offset = 0;
  std::string blobs;
  for (const auto& p : checkpoint.parameters) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"count", p.tensor.size()}});
    for (Real v : p.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) blobs.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    offset += 4 * p.tensor.size();
  }
  header["parameters"] = std::move(params);
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, text.size());
  out += text;
  out += blobs;

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError(CheckpointError::Kind::io, "failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Kind::io, "cannot move checkpoint into " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (in.size() < sizeof kCheckpointMagic) corrupt(path, "file shorter than the magic", in.size());
  if (std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) corrupt(path, "bad magic bytes", 0);
  if (in.size() < 16) corrupt(path, "truncated header length", in.size());
  const std::uint64_t header_len = get_u64(in, 8);
  if (header_len > in.size() - 16) corrupt(path, "header extends past end of file", in.size());

  json header;
  try {
    header = json::parse(in.begin() + 16, in.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    corrupt(path, std::string("unparseable header: ") + e.what(), 16);
  }

  Checkpoint c;
  try {
    c.format_version = header.at("format_version").get<int>();
    if (c.format_version != kCheckpointVersion) {
      throw CheckpointError(CheckpointError::Kind::unsupported_version,
                            "checkpoint " + path.string() + " has unsupported format version " +
                                std::to_string(c.format_version) + " (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    }
    c.config = header.at("model").get<ModelConfig>();
    c.step = header.at("step").get<std::uint64_t>();
    c.seeds = header.value("seeds", json::object());
    c.metadata = header.value("metadata", json::object());
    const std::uint64_t base = 16 + header_len;
    for (const auto& p : header.at("parameters")) {
      const auto shape = p.at("shape").get<Shape>();
      const auto offset = p.at("offset").get<std::uint64_t>();
      const auto count = p.at("count").get<std::uint64_t>();
      if (count != numel(shape)) corrupt(path, "parameter count does not match its shape", base + offset);
      if (offset > in.size() - base || 4 * count > in.size() - base - offset) {
        corrupt(path, "parameter '" + p.at("name").get<std::string>() + "' truncated", in.size());
      }
      std::vector<Real> data(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t at = base + offset + 4 * i;
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
        data[i] = static_cast<Real>(std::bit_cast<float>(bits));
      }
      c.parameters.push_back({p.at("name").get<std::string>(), Tensor(shape, std::move(data))});
    }
  } catch (const json::exception& e) {
    corrupt(path, std::string("malformed header: ") + e.what(), 16);
  } catch (const ConfigError& e) {
    corrupt(path, std::string("invalid model config: ") + e.what(), 16);
  }
  return c;
}

MViTacModel model_from_checkpoint(const Checkpoint& checkpoint) {
  MViTacModel model(checkpoint.config, 0);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& p : checkpoint.parameters) by_name[p.name] = &p.tensor;
  for (auto& p : model.parameters()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint is missing parameter '" + p.name + "'");
    }
    if (it->second->shape() != p.tensor.shape()) {
      throw CheckpointError(CheckpointError::Kind::corrupt, "parameter '" + p.name + "' has shape " +
                                                                to_string(it->second->shape()) + ", model expects " +
                                                                to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  }
  return model;
}

}  // namespace mvitac
