// SPDX-License-Identifier: Apache-2.0

#include "mvitac/optim.hpp"

#include <cmath>
#include <string>

#include "mvitac/error.hpp"

namespace mvitac {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
}

void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state, const AdamConfig& config,
               std::uint64_t t, std::string_view name) {
  if (t < 1) throw ConfigError("adam: step counter must start at 1");
  if (grads.size() != params.size()) throw ShapeError("adam: gradient length mismatch for " + std::string(name));
  for (Real g : grads) {
    if (!std::isfinite(static_cast<double>(g))) {
      throw DivergedTrainingError("non-finite gradient in parameter '" + std::string(name) + "'");
    }
  }
  state.m.resize(params.size(), 0.0);
  state.v.resize(params.size(), 0.0);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double update = config.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + config.epsilon);
    params[i] = static_cast<Real>(static_cast<double>(params[i]) - update);
  }
}

Adam::Adam(std::vector<NamedTensor> params, const AdamConfig& config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {
  config_.validate();
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (p.has_grad()) {
      adam_step(p.mutable_data(), p.grad(), state_[i], config_, t_, params_[i].name);
    } else {
      const std::vector<Real> zeros(p.size(), Real(0));
      adam_step(p.mutable_data(), zeros, state_[i], config_, t_, params_[i].name);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace mvitac
