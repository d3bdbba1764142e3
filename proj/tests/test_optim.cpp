// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mvitac/error.hpp"
#include "mvitac/optim.hpp"

using namespace mvitac;

namespace {

// Independent double-precision Adam recurrence.
struct OracleAdam {
  double m = 0, v = 0;
  std::uint64_t t = 0;
  double step(double p, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(0.999, static_cast<double>(t)));
    return p - lr * mh / (std::sqrt(vh) + 1e-7);
  }
};

}  // namespace

TEST_CASE("zero gradient is a fixed point") {
  std::vector<Real> p{1, -2, 3};
  const std::vector<Real> g(3, 0);
  AdamState s;
  for (std::uint64_t t = 1; t <= 5; ++t) adam_step(p, g, s, {}, t);
  CHECK(p == std::vector<Real>{1, -2, 3});
  for (double m : s.m) CHECK(m == 0.0);
  for (double v : s.v) CHECK(v == 0.0);
}

TEST_CASE("first step moves by lr") {
  std::vector<Real> p{1};
  AdamState s;
  adam_step(p, std::vector<Real>{2}, s, {0.03}, 1);
  CHECK(p[0] == doctest::Approx(0.97).epsilon(1e-4));
}

TEST_CASE("minimizing p^2") {
  std::vector<Real> p{1};
  AdamState s;
  OracleAdam oracle;
  double q = 1;
  for (std::uint64_t t = 1; t <= 500; ++t) {
    adam_step(p, std::vector<Real>{2 * p[0]}, s, {0.03}, t);
    q = oracle.step(q, 2 * q, 0.03);
  }
  CHECK(std::abs(p[0]) < 0.01);
  CHECK(std::abs(q) < 0.01);
  CHECK(p[0] == doctest::Approx(q).epsilon(1e-3));
}

TEST_CASE("matches the oracle recurrence on a noisy gradient sequence") {
  std::vector<Real> p{0.5};
  AdamState s;
  OracleAdam oracle;
  double q = 0.5;
  for (std::uint64_t t = 1; t <= 50; ++t) {
    const double g = std::sin(static_cast<double>(t)) * 3.0;
    adam_step(p, std::vector<Real>{static_cast<Real>(g)}, s, {0.01}, t);
    q = oracle.step(q, static_cast<double>(static_cast<Real>(g)), 0.01);
  }
  CHECK(p[0] == doctest::Approx(q).epsilon(1e-5));
}

TEST_CASE("non-finite gradient names the parameter") {
  std::vector<Real> p{1, 2};
  AdamState s;
  const std::vector<Real> g{0, std::numeric_limits<Real>::quiet_NaN()};
  CHECK_THROWS_WITH_AS(adam_step(p, g, s, {}, 1, "visual.query_encoder.w0"), doctest::Contains("visual.query_encoder.w0"),
                       DivergedTrainingError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((AdamConfig{0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AdamConfig{0.1, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AdamConfig{0.1, 0.9, -0.1}.validate()), ConfigError);
  CHECK_THROWS_AS((AdamConfig{0.1, 0.9, 0.999, 0.0}.validate()), ConfigError);
}

TEST_CASE("Adam over tensors") {
  Tensor a({2}, {1, 1}, true), b({1}, {5}, true);
  Adam opt({{"a", a}, {"b", b}}, {0.1});
  a.mutable_grad()[0] = 1;
  opt.step();
  CHECK(opt.steps() == 1);
  CHECK(a.at(0) == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(a.at(1) == 1);
  CHECK(b.at(0) == 5);  // no gradient buffer
  opt.zero_grad();
  CHECK(a.grad()[0] == 0);
}
