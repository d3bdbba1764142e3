// SPDX-License-Identifier: Apache-2.0

#include "mvitac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mvitac/error.hpp"
#include "mvitac/rng.hpp"

namespace mvitac {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: empty extent list");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("invalid shape " + to_string(shape) + ": extents must be >= 1");
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<Real> data, bool requires_grad) {
  validate_shape(shape);
  if (data.size() != numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, Real fill) {
  validate_shape(shape);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->data.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, std::vector<Real>{value}); }

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return impl().data.size(); }
std::span<const Real> Tensor::data() const { return impl().data; }
std::span<Real> Tensor::mutable_data() { return impl().data; }

Real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + to_string(shape()));
  return impl().data[0];
}

Real Tensor::at(std::size_t flat_index) const { return impl().data.at(flat_index); }

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl().requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return impl().producer == nullptr; }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const Real> Tensor::grad() const { return impl().grad; }

std::span<Real> Tensor::mutable_grad() {
  auto& d = impl();
  if (d.grad.empty()) d.grad.assign(d.data.size(), Real(0));
  return d.grad;
}

void Tensor::zero_grad() {
  auto& d = impl();
  std::fill(d.grad.begin(), d.grad.end(), Real(0));
}

void Tensor::clear_grad() {
  impl().grad.clear();
  impl().grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  return Tensor(impl().shape, impl().data, impl().requires_grad);
}

Tensor Tensor::detach() const { return Tensor(impl().shape, impl().data, false); }

Tensor make_tensor(const Shape& shape, const InitSpec& init, std::uint64_t seed, bool requires_grad) {
  validate_shape(shape);
  std::vector<Real> data(numel(shape), Real(0));
  Rng rng(mix_seed(seed));
  switch (init.kind) {
    case InitSpec::Kind::zeros:
      break;
    case InitSpec::Kind::constant:
      std::fill(data.begin(), data.end(), static_cast<Real>(init.a));
      break;
    case InitSpec::Kind::uniform:
      for (Real& v : data) v = static_cast<Real>(init.a + (init.b - init.a) * uniform01(rng));
      break;
    case InitSpec::Kind::kaiming_normal: {
      if (init.fan_in == 0) throw ShapeError("kaiming-normal init requires fan_in >= 1");
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(init.fan_in)));
      for (Real& v : data) v = static_cast<Real>(normal(rng));
      break;
    }
  }
  return Tensor(shape, std::move(data), requires_grad);
}

void accumulate_grad(const Tensor& t, std::span<const Real> values) {
  if (!t.requires_grad()) return;
  Tensor handle = t;
  auto g = handle.mutable_grad();
  if (g.size() != values.size()) throw ShapeError("gradient length mismatch for shape " + to_string(t.shape()));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

Tape::~Tape() { reset(); }

bool Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn backward) {
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  auto& out = output.impl();
  out.requires_grad = true;
  out.producer = this;
  out.node_index = nodes_.size();
  nodes_.push_back(Node{std::string(op), std::move(inputs), output, std::move(backward)});
  return true;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  const auto& l = loss.impl();
  if (l.producer != this || l.node_index >= nodes_.size()) {
    throw GraphError("loss was not produced through this tape (detached loss)");
  }
  for (Node& n : nodes_) n.output.clear_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] = Real(1);
  for (std::size_t i = l.node_index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.output.has_grad()) continue;
    n.backward(n.output.grad());
  }
}

void Tape::reset() {
  for (Node& n : nodes_) n.output.impl().producer = nullptr;
  nodes_.clear();
}

}  // namespace mvitac
