// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mvitac/tensor.hpp"

namespace mvitac {

inline constexpr double kDefaultGradCheckEps = sizeof(Real) == sizeof(float) ? 1e-3 : 1e-6;

struct GradCheckCoordinate {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  double loss = 0.0;  // f at the unperturbed parameters
  std::vector<GradCheckCoordinate> details;
};

// Builds a scalar loss from the current parameter values. Receives a tape for
// the analytic pass and nullptr for finite-difference probes; must be a pure
// function of the parameters (fixed seeds for any dropout).
using ScalarFn = std::function<Tensor(Tape*)>;

// Compares reverse-mode gradients against central differences
// (f(p+eps) - f(p-eps)) / 2eps for every coordinate of every parameter.
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
// Throws ProbeFailureError when f is non-finite at any probe.
GradCheckReport grad_check_report(const ScalarFn& f, std::span<Tensor> params, double eps = kDefaultGradCheckEps);

inline double grad_check(const ScalarFn& f, std::span<Tensor> params, double eps = kDefaultGradCheckEps) {
  return grad_check_report(f, params, eps).max_relative_error;
}

}  // namespace mvitac
