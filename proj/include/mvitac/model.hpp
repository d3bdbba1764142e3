// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvitac/tensor.hpp"

namespace mvitac {

struct ConvBlockConfig {
  std::size_t filters = 16;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;

  bool operator==(const ConvBlockConfig&) const = default;
};

// Plain conv -> ReLU stack followed by global average pooling. The last
// block's filter count is the backbone feature dimension.
struct EncoderConfig {
  std::size_t in_channels = 3;
  std::size_t input_size = 32;
  std::vector<ConvBlockConfig> blocks{{16, 3, 2, 1}, {32, 3, 2, 1}, {64, 3, 2, 1}, {64, 3, 2, 1}};
  std::size_t backbone_dim = 64;

  // 4 blocks, 16/32/64/64 filters, 32x32 inputs, 64-d features.
  static EncoderConfig desk(std::size_t in_channels = 3);
  // 224x224 inputs, 512-d features.
  static EncoderConfig paper_scale(std::size_t in_channels = 3);

  void validate() const;
  // Spatial extent after each block.
  std::vector<std::size_t> spatial_sizes() const;

  bool operator==(const EncoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig visual;
  EncoderConfig tactile;
  std::size_t hidden_dim = 0;  // 0 selects backbone_dim
  std::size_t embed_dim = 128;

  std::size_t head_hidden_dim() const { return hidden_dim ? hidden_dim : visual.backbone_dim; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// FNV-1a over names, shapes and raw parameter bytes.
std::uint64_t parameter_hash(std::span<const NamedTensor> params);
std::size_t parameter_count(std::span<const NamedTensor> params);

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::uint64_t seed, bool trainable);

  // images [N, in_channels, input_size, input_size] -> features [N, backbone_dim]
  Tensor forward(const Tensor& images, Tape* tape = nullptr) const;

  const EncoderConfig& config() const { return config_; }
  std::vector<NamedTensor> parameters(const std::string& prefix) const;
  Encoder copy(bool trainable) const;

 private:
  EncoderConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Two-layer MLP: l2_normalize(W2 relu(W1 x + b1) + b2).
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed,
                 bool trainable);

  Tensor forward(const Tensor& features, Tape* tape = nullptr) const;

  std::size_t in_dim() const { return w1_.dim(0); }
  std::size_t out_dim() const { return w2_.dim(1); }
  std::vector<NamedTensor> parameters(const std::string& prefix) const;
  ProjectionHead copy(bool trainable) const;

 private:
  Tensor w1_, b1_, w2_, b2_;
};

// One modality: query encoder, its momentum copy, and four heads. The intra
// heads embed for the same-modality loss; the inter heads embed for the
// cross-modal loss. Key-side members never carry gradients.
struct ModalityBranch {
  Encoder query_encoder;
  Encoder momentum_encoder;
  ProjectionHead intra_head_q;
  ProjectionHead intra_head_k;
  ProjectionHead inter_head_q;
  ProjectionHead inter_head_k;

  std::vector<NamedTensor> query_parameters(const std::string& prefix) const;
  // Index-aligned with query_parameters().
  std::vector<NamedTensor> momentum_parameters(const std::string& prefix) const;
};

// The four augmented inputs of one training step.
struct ViewBatch {
  Tensor visual_q;
  Tensor visual_k;
  Tensor tactile_q;
  Tensor tactile_k;
};

// Row-normalized embeddings. Naming: <query modality><key modality>_<side>.
struct EmbeddingSet {
  Tensor vv_q, vv_k;
  Tensor tt_q, tt_k;
  Tensor vt_q, vt_k;
  Tensor tv_q, tv_k;
};

class MViTacModel {
 public:
  MViTacModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModalityBranch& visual() { return visual_; }
  ModalityBranch& tactile() { return tactile_; }
  const ModalityBranch& visual() const { return visual_; }
  const ModalityBranch& tactile() const { return tactile_; }

  // Optimizer-visible parameters: both query encoders and the four query heads.
  std::vector<NamedTensor> query_parameters() const;
  // Momentum encoders and key heads, index-aligned with query_parameters().
  std::vector<NamedTensor> momentum_parameters() const;
  // Every parameter in checkpoint order.
  std::vector<NamedTensor> parameters() const;

  EmbeddingSet forward_views(const ViewBatch& views, Tape* tape = nullptr) const;

  // p_k <- m p_k + (1 - m) p_q over momentum encoders and all key heads.
  void momentum_update(double m);

 private:
  ModelConfig config_;
  ModalityBranch visual_;
  ModalityBranch tactile_;
};

}  // namespace mvitac
