// SPDX-License-Identifier: Apache-2.0

#include "mvitac/model.hpp"

#include <cmath>
#include <cstring>

#include "mvitac/error.hpp"
#include "mvitac/ops.hpp"
#include "mvitac/rng.hpp"

namespace mvitac {

EncoderConfig EncoderConfig::desk(std::size_t in_channels) {
  EncoderConfig c;
  c.in_channels = in_channels;
  return c;
}

EncoderConfig EncoderConfig::paper_scale(std::size_t in_channels) {
  EncoderConfig c;
  c.in_channels = in_channels;
  c.input_size = 224;
  c.blocks = {{64, 7, 2, 3}, {128, 3, 2, 1}, {256, 3, 2, 1}, {512, 3, 2, 1}};
  c.backbone_dim = 512;
  return c;
}

std::vector<std::size_t> EncoderConfig::spatial_sizes() const {
  std::vector<std::size_t> sizes;
  std::size_t s = input_size;
  for (const auto& b : blocks) {
    if (b.stride == 0 || s + 2 * b.padding < b.kernel) return sizes;
    s = (s + 2 * b.padding - b.kernel) / b.stride + 1;
    sizes.push_back(s);
  }
  return sizes;
}

void EncoderConfig::validate() const {
  if (in_channels == 0) throw ConfigError("encoder: in_channels must be >= 1");
  if (input_size == 0) throw ConfigError("encoder: input_size must be >= 1");
  if (blocks.empty()) throw ConfigError("encoder: at least one conv block is required");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.filters == 0 || b.kernel == 0 || b.stride == 0) {
      throw ConfigError("encoder: block " + std::to_string(i) + " needs positive filters, kernel and stride");
    }
  }
  if (spatial_sizes().size() != blocks.size()) {
    throw ConfigError("encoder: blocks produce an empty feature map for input size " + std::to_string(input_size));
  }
  if (blocks.back().filters != backbone_dim) {
    throw ConfigError("encoder: last block has " + std::to_string(blocks.back().filters) +
                      " filters but backbone_dim is " + std::to_string(backbone_dim));
  }
}

void ModelConfig::validate() const {
  visual.validate();
  tactile.validate();
  EncoderConfig t = tactile;
  t.in_channels = visual.in_channels;
  if (!(t == visual)) throw ConfigError("model: visual and tactile encoders may differ only in in_channels");
  if (embed_dim == 0) throw ConfigError("model: embed_dim must be >= 1");
}

std::uint64_t parameter_hash(std::span<const NamedTensor> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    for (std::size_t e : p.tensor.shape()) feed(&e, sizeof e);
    feed(p.tensor.data().data(), p.tensor.size() * sizeof(Real));
  }
  return h;
}

std::size_t parameter_count(std::span<const NamedTensor> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed, bool trainable) : config_(config) {
  config_.validate();
  std::size_t channels = config_.in_channels;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const auto& b = config_.blocks[i];
    const std::size_t fan_in = channels * b.kernel * b.kernel;
    weights_.push_back(make_tensor({b.filters, channels, b.kernel, b.kernel}, InitSpec::kaiming_normal(fan_in),
                                   derive_seed(seed, {i}), trainable));
    biases_.push_back(make_tensor({b.filters}, InitSpec::zeros(), 0, trainable));
    channels = b.filters;
  }
}

Tensor Encoder::forward(const Tensor& images, Tape* tape) const {
  if (images.rank() != 4 || images.dim(1) != config_.in_channels || images.dim(2) != config_.input_size ||
      images.dim(3) != config_.input_size) {
    throw ShapeError("encode: images " + to_string(images.shape()) + " do not match encoder input [N," +
                     std::to_string(config_.in_channels) + "," + std::to_string(config_.input_size) + "," +
                     std::to_string(config_.input_size) + "]");
  }
  Tensor x = images;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const auto& b = config_.blocks[i];
    x = ops::conv2d(x, weights_[i], biases_[i], {b.stride, b.padding}, tape);
    x = ops::relu(x, tape);
  }
  return ops::global_avg_pool(x, tape);
}

std::vector<NamedTensor> Encoder::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({prefix + ".conv" + std::to_string(i) + ".weight", weights_[i]});
    out.push_back({prefix + ".conv" + std::to_string(i) + ".bias", biases_[i]});
  }
  return out;
}

Encoder Encoder::copy(bool trainable) const {
  Encoder e;
  e.config_ = config_;
  for (const auto& w : weights_) e.weights_.push_back(w.detach().set_requires_grad(trainable));
  for (const auto& b : biases_) e.biases_.push_back(b.detach().set_requires_grad(trainable));
  return e;
}

ProjectionHead::ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                               std::uint64_t seed, bool trainable)
    : w1_(make_tensor({in_dim, hidden_dim}, InitSpec::kaiming_normal(in_dim), derive_seed(seed, {1}), trainable)),
      b1_(make_tensor({hidden_dim}, InitSpec::zeros(), 0, trainable)),
      w2_(make_tensor({hidden_dim, out_dim}, InitSpec::kaiming_normal(hidden_dim), derive_seed(seed, {2}),
                      trainable)),
      b2_(make_tensor({out_dim}, InitSpec::zeros(), 0, trainable)) {}

Tensor ProjectionHead::forward(const Tensor& features, Tape* tape) const {
  if (features.rank() != 2 || features.dim(1) != in_dim()) {
    throw ShapeError("project: features " + to_string(features.shape()) + " do not match head input dim " +
                     std::to_string(in_dim()));
  }
  Tensor h = ops::relu(ops::add_bias(ops::matmul(features, w1_, tape), b1_, tape), tape);
  Tensor z = ops::add_bias(ops::matmul(h, w2_, tape), b2_, tape);
  return ops::l2_normalize(z, tape);
}

std::vector<NamedTensor> ProjectionHead::parameters(const std::string& prefix) const {
  return {{prefix + ".linear1.weight", w1_},
          {prefix + ".linear1.bias", b1_},
          {prefix + ".linear2.weight", w2_},
          {prefix + ".linear2.bias", b2_}};
}

ProjectionHead ProjectionHead::copy(bool trainable) const {
  ProjectionHead h;
  h.w1_ = w1_.detach().set_requires_grad(trainable);
  h.b1_ = b1_.detach().set_requires_grad(trainable);
  h.w2_ = w2_.detach().set_requires_grad(trainable);
  h.b2_ = b2_.detach().set_requires_grad(trainable);
  return h;
}

namespace {

void append(std::vector<NamedTensor>& dst, std::vector<NamedTensor> src) {
  for (auto& p : src) dst.push_back(std::move(p));
}

ModalityBranch make_branch(const EncoderConfig& enc, std::size_t hidden, std::size_t embed, std::uint64_t seed) {
  ModalityBranch b;
  b.query_encoder = Encoder(enc, derive_seed(seed, {0}), true);
  b.momentum_encoder = b.query_encoder.copy(false);
  b.intra_head_q = ProjectionHead(enc.backbone_dim, hidden, embed, derive_seed(seed, {1}), true);
  b.intra_head_k = b.intra_head_q.copy(false);
  b.inter_head_q = ProjectionHead(enc.backbone_dim, hidden, embed, derive_seed(seed, {2}), true);
  b.inter_head_k = b.inter_head_q.copy(false);
  return b;
}

}  // namespace

std::vector<NamedTensor> ModalityBranch::query_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out = query_encoder.parameters(prefix + ".query_encoder");
  append(out, intra_head_q.parameters(prefix + ".intra_head_q"));
  append(out, inter_head_q.parameters(prefix + ".inter_head_q"));
  return out;
}

std::vector<NamedTensor> ModalityBranch::momentum_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out = momentum_encoder.parameters(prefix + ".momentum_encoder");
  append(out, intra_head_k.parameters(prefix + ".intra_head_k"));
  append(out, inter_head_k.parameters(prefix + ".inter_head_k"));
  return out;
}

MViTacModel::MViTacModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t hidden = config_.head_hidden_dim();
  visual_ = make_branch(config_.visual, hidden, config_.embed_dim, derive_seed(seed, {1}));
  tactile_ = make_branch(config_.tactile, hidden, config_.embed_dim, derive_seed(seed, {2}));
}

std::vector<NamedTensor> MViTacModel::query_parameters() const {
  std::vector<NamedTensor> out = visual_.query_parameters("visual");
  append(out, tactile_.query_parameters("tactile"));
  return out;
}

std::vector<NamedTensor> MViTacModel::momentum_parameters() const {
  std::vector<NamedTensor> out = visual_.momentum_parameters("visual");
  append(out, tactile_.momentum_parameters("tactile"));
  return out;
}

std::vector<NamedTensor> MViTacModel::parameters() const {
  std::vector<NamedTensor> out = query_parameters();
  append(out, momentum_parameters());
  return out;
}

EmbeddingSet MViTacModel::forward_views(const ViewBatch& views, Tape* tape) const {
  const std::size_t n = views.visual_q.dim(0);
  for (const Tensor* v : {&views.visual_k, &views.tactile_q, &views.tactile_k}) {
    if (v->rank() < 1 || v->dim(0) != n) {
      throw ShapeError("forward_views: view batch sizes differ: " + to_string(views.visual_q.shape()) + " vs " +
                       to_string(v->shape()));
    }
  }
  const Tensor fv_q = visual_.query_encoder.forward(views.visual_q, tape);
  const Tensor ft_q = tactile_.query_encoder.forward(views.tactile_q, tape);
  const Tensor fv_k = visual_.momentum_encoder.forward(views.visual_k);
  const Tensor ft_k = tactile_.momentum_encoder.forward(views.tactile_k);

  EmbeddingSet z;
  z.vv_q = visual_.intra_head_q.forward(fv_q, tape);
  z.vv_k = visual_.intra_head_k.forward(fv_k);
  z.tt_q = tactile_.intra_head_q.forward(ft_q, tape);
  z.tt_k = tactile_.intra_head_k.forward(ft_k);
  z.vt_q = visual_.inter_head_q.forward(fv_q, tape);
  z.vt_k = tactile_.inter_head_k.forward(ft_k);
  z.tv_q = tactile_.inter_head_q.forward(ft_q, tape);
  z.tv_k = visual_.inter_head_k.forward(fv_k);
  return z;
}

void MViTacModel::momentum_update(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: coefficient " + std::to_string(m) + " not in [0,1]");
  const auto query = query_parameters();
  auto momentum = momentum_parameters();
  for (std::size_t i = 0; i < query.size(); ++i) {
    auto q = query[i].tensor.data();
    auto k = momentum[i].tensor.mutable_data();
    for (std::size_t j = 0; j < k.size(); ++j) {
      k[j] = static_cast<Real>(m * static_cast<double>(k[j]) + (1.0 - m) * static_cast<double>(q[j]));
    }
  }
}

}  // namespace mvitac
