// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvitac/tensor.hpp"

// Differentiable tensor operations. Every op records a tape node when `tape` is
// non-null and at least one input requires grad; otherwise the output is a
// detached value.
namespace mvitac::ops {

// Rows with a smaller Euclidean norm are rejected by l2_normalize.
inline constexpr double kNormFloor = 1e-12;

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor transpose(const Tensor& a, Tape* tape = nullptr);
// bias is optional ([F] when defined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dParams params, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// x[N,D] + bias[D] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);
Tensor scale(const Tensor& x, double c, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sum(const Tensor& x, Tape* tape = nullptr);
// Inverted dropout: in train mode zeroes each element with probability p and
// scales survivors by 1/(1-p). Identity in eval mode.
Tensor dropout(const Tensor& x, double p, bool train, std::uint64_t seed, Tape* tape = nullptr);
// [N, ...] -> [N, prod(...)]
Tensor batch_flatten(const Tensor& x, Tape* tape = nullptr);
// Row-wise unit normalization of an [N,D] tensor.
Tensor l2_normalize(const Tensor& x, Tape* tape = nullptr);
// Mean over rows of -log softmax(logits[i])[labels[i]]; logits are max-shifted per row.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tape* tape = nullptr);
// Column-wise concatenation of two [N,*] tensors (not differentiable; used on frozen features).
Tensor concat_columns(const Tensor& a, const Tensor& b);

// Uniform dispatch over the primitive op kinds.
struct OpSpec {
  enum class Kind { matmul, conv2d, relu, global_avg_pool, add, scale, dropout, batch_flatten };

  Kind kind = Kind::relu;
  Conv2dParams conv{};
  double scale = 1.0;
  double dropout_p = 0.0;
  bool train = false;
  std::uint64_t seed = 0;
};

Tensor op_forward(const OpSpec& spec, std::span<const Tensor> inputs, Tape* tape = nullptr);

}  // namespace mvitac::ops
