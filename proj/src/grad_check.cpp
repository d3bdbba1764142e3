// SPDX-License-Identifier: Apache-2.0

#include "mvitac/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mvitac/error.hpp"

namespace mvitac {

namespace {

double probe(const ScalarFn& f, std::size_t param, std::size_t index) {
  const Tensor loss = f(nullptr);
  const double v = static_cast<double>(loss.item());
  if (!std::isfinite(v)) {
    throw ProbeFailureError("grad_check: non-finite value at parameter " + std::to_string(param) + " coordinate " +
                            std::to_string(index));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFn& f, std::span<Tensor> params, double eps) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  GradCheckReport report;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    const Tensor loss = f(&tape);
    if (!std::isfinite(static_cast<double>(loss.item()))) throw ProbeFailureError("grad_check: non-finite loss");
    report.loss = static_cast<double>(loss.item());
    tape.backward(loss);
    for (Tensor& p : params) {
      std::vector<double> g(p.size(), 0.0);
      if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
      analytic.push_back(std::move(g));
    }
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real saved = data[i];
      data[i] = static_cast<Real>(saved + eps);
      const double up = probe(f, pi, i);
      data[i] = static_cast<Real>(saved - eps);
      const double down = probe(f, pi, i);
      data[i] = saved;
      // The effective step is what survives rounding of the perturbed values.
      const double h = static_cast<double>(static_cast<Real>(saved + eps)) -
                       static_cast<double>(static_cast<Real>(saved - eps));
      const double numeric = (up - down) / h;
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coordinates;
      report.details.push_back({pi, i, a, numeric, err});
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_param = pi;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  for (Tensor& p : params) p.clear_grad();
  return report;
}

}  // namespace mvitac
