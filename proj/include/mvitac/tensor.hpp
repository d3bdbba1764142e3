// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvitac/real.hpp"

namespace mvitac {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  // Set when the tensor is the output of a recorded tape node.
  const Tape* producer = nullptr;
  std::size_t node_index = 0;
};

}  // namespace detail

// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
// Parameters are mutated in place by the optimizer and momentum updates; every
// other tensor is treated as immutable once an op has produced it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);
  explicit Tensor(Shape shape, Real fill = Real(0));

  static Tensor scalar(Real value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const Real> data() const;
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::size_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const Real> grad() const;
  // Allocates a zeroed gradient buffer on first use.
  std::span<Real> mutable_grad();
  void zero_grad();
  void clear_grad();

  // Deep copy of shape and data; the copy is a leaf with the same requires_grad flag.
  Tensor clone() const;
  // Deep copy that never requires grad.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

struct InitSpec {
  enum class Kind { zeros, constant, uniform, kaiming_normal };

  Kind kind = Kind::zeros;
  double a = 0.0;
  double b = 0.0;
  std::size_t fan_in = 1;

  static InitSpec zeros() { return {}; }
  static InitSpec constant(double c) { return {Kind::constant, c, 0.0, 1}; }
  static InitSpec uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 1}; }
  static InitSpec kaiming_normal(std::size_t fan_in) { return {Kind::kaiming_normal, 0.0, 0.0, fan_in}; }
};

// Deterministic for a given (shape, init, seed). Kaiming-normal draws N(0, 2/fan_in).
Tensor make_tensor(const Shape& shape, const InitSpec& init, std::uint64_t seed, bool requires_grad = false);

// Per-step record of differentiable operations. Nodes are appended in creation
// order and replayed once each, in reverse, by backward(). A tape is used by one
// thread for one forward/backward pass and then reset.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const Real> output_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Records `output` as produced from `inputs`. No-op (returns false) when no
  // input requires grad; otherwise marks the output as requiring grad.
  bool record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn backward);

  // Populates grad buffers of every requires_grad leaf reachable from `loss`.
  // Leaf gradients accumulate across calls; intermediate gradients are
  // recomputed on every call.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t index) const { return nodes_.at(index).op; }

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Adds `values` into the gradient buffer of `t` when it requires grad.
void accumulate_grad(const Tensor& t, std::span<const Real> values);

}  // namespace mvitac
