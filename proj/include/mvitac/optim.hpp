// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mvitac/model.hpp"

namespace mvitac {

struct AdamConfig {
  double lr = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update at step t >= 1:
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Throws DivergedTrainingError naming `name` on a non-finite gradient.
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state, const AdamConfig& config,
               std::uint64_t t, std::string_view name = {});

// Adam over a fixed parameter list. Parameters without a gradient buffer are
// treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, const AdamConfig& config);

  void step();
  void zero_grad();
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<AdamState> state_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
};

}  // namespace mvitac
