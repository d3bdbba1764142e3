// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mvitac/error.hpp"
#include "mvitac/ops.hpp"
#include "mvitac/rng.hpp"
#include "mvitac/tensor.hpp"

using namespace mvitac;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor leaf(Shape shape, std::vector<Real> data) { return Tensor(std::move(shape), std::move(data), true); }

}  // namespace

TEST_CASE("make_tensor initializers") {
  CHECK(values(make_tensor({2, 2}, InitSpec::zeros(), 3)) == std::vector<double>{0, 0, 0, 0});
  CHECK(values(make_tensor({3}, InitSpec::constant(1.5), 9)) == std::vector<double>{1.5, 1.5, 1.5});
  const Tensor a = make_tensor({4}, InitSpec::uniform(0, 1), 7);
  const Tensor b = make_tensor({4}, InitSpec::uniform(0, 1), 7);
  CHECK(values(a) == values(b));
  for (double v : values(a)) CHECK((v >= 0.0 && v < 1.0));
  CHECK(values(make_tensor({4}, InitSpec::uniform(0, 1), 8)) != values(a));
}

TEST_CASE("kaiming normal has std sqrt(2/fan_in)") {
  const std::size_t fan_in = 50;
  const Tensor t = make_tensor({200000}, InitSpec::kaiming_normal(fan_in), 11);
  double mean = 0, sq = 0;
  for (double v : values(t)) mean += v;
  mean /= static_cast<double>(t.size());
  for (double v : values(t)) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(t.size()));
  CHECK(std::abs(mean) < 0.002);
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.01));
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS_AS(make_tensor({}, InitSpec::zeros(), 0), ShapeError);
  CHECK_THROWS_AS(make_tensor({2, 0}, InitSpec::zeros(), 0), ShapeError);
  CHECK_THROWS_AS(Tensor({2}, std::vector<Real>{1, 2, 3}), ShapeError);
}

TEST_CASE("op examples") {
  CHECK(values(ops::relu(Tensor({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});

  const Tensor pooled = ops::global_avg_pool(Tensor({1, 1, 2, 2}, {1, 2, 3, 5}));
  CHECK(pooled.shape() == Shape{1, 1});
  CHECK(pooled.item() == doctest::Approx(2.75));

  const Tensor x = make_tensor({1, 1, 5, 7}, InitSpec::uniform(-1, 1), 3);
  const Tensor id = ops::conv2d(x, Tensor({1, 1, 1, 1}, {1}), Tensor(), {1, 0});
  CHECK(values(id) == values(x));

  const Tensor m = ops::matmul(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
  CHECK(values(m) == std::vector<double>{58, 64, 139, 154});
  CHECK(values(ops::transpose(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}))) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(values(ops::scale(Tensor({2}, {1, -2}), 3.0)) == std::vector<double>{3, -6});
  CHECK(ops::sum(Tensor({3}, {1, 2, 3.5})).item() == doctest::Approx(6.5));
  CHECK(values(ops::add_bias(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {10, 20}))) ==
        std::vector<double>{11, 22, 13, 24});
  CHECK(ops::batch_flatten(Tensor({2, 3, 2, 2})).shape() == Shape{2, 12});
}

TEST_CASE("conv2d against a hand-computed 3x3 example") {
  // 3x3 input, 2x2 all-ones kernel, stride 1, padding 0: each output is a 2x2 window sum.
  const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor w({1, 1, 2, 2}, {1, 1, 1, 1});
  const Tensor y = ops::conv2d(x, w, Tensor({1}, {0.5}), {1, 0});
  CHECK(values(y) == std::vector<double>{12.5, 16.5, 24.5, 28.5});
  // padding 1, stride 2 on the same input: windows at (-1,-1), (-1,1), (1,-1), (1,1).
  const Tensor z = ops::conv2d(x, w, Tensor(), {2, 1});
  CHECK(z.shape() == Shape{1, 1, 2, 2});
  CHECK(values(z) == std::vector<double>{1, 5, 11, 28});
}

TEST_CASE("conformability errors name the op and both shapes") {
  try {
    ops::matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(Tensor({2}), Tensor({3})), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor(), {1, 0}), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor(), {1, 0}), ShapeError);
}

TEST_CASE("shape algebra over random conforming shapes") {
  Rng rng(123);
  const auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = pick(1, 3), c = pick(1, 3), h = pick(3, 9), w = pick(3, 9), f = pick(1, 4);
    const std::size_t k = pick(1, std::min<std::size_t>(3, h)), s = pick(1, 3), p = pick(0, 1);
    const Tensor x(Shape{n, c, h, w}, Real(0.5));
    const Tensor wt(Shape{f, c, k, k}, Real(0.1));
    ops::OpSpec spec;
    spec.kind = ops::OpSpec::Kind::conv2d;
    spec.conv = {s, p};
    const Tensor inputs[] = {x, wt};
    const Tensor y = ops::op_forward(spec, inputs);
    const std::size_t oh = (h + 2 * p - k) / s + 1, ow = (w + 2 * p - k) / s + 1;
    CHECK(y.shape() == Shape{n, f, oh, ow});

    const std::size_t a = pick(1, 5), b = pick(1, 5);
    spec.kind = ops::OpSpec::Kind::matmul;
    const Tensor mm[] = {Tensor({n, a}), Tensor({a, b})};
    CHECK(ops::op_forward(spec, mm).shape() == Shape{n, b});

    spec.kind = ops::OpSpec::Kind::global_avg_pool;
    CHECK(ops::op_forward(spec, std::span(&x, 1)).shape() == Shape{n, c});
    spec.kind = ops::OpSpec::Kind::batch_flatten;
    CHECK(ops::op_forward(spec, std::span(&x, 1)).shape() == Shape{n, c * h * w});
    for (auto kind : {ops::OpSpec::Kind::relu, ops::OpSpec::Kind::scale, ops::OpSpec::Kind::dropout}) {
      spec.kind = kind;
      spec.dropout_p = 0.5;
      spec.train = true;
      CHECK(ops::op_forward(spec, std::span(&x, 1)).shape() == x.shape());
    }
  }
}

TEST_CASE("dropout: rate, scaling, eval identity and determinism") {
  const Tensor x(Shape{100000}, Real(1));
  const Tensor y = ops::dropout(x, 0.3, true, 5);
  std::size_t zeros = 0;
  for (double v : values(y)) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.7));
    }
  }
  CHECK(static_cast<double>(zeros) / 1e5 == doctest::Approx(0.3).epsilon(0.02));
  CHECK(values(ops::dropout(x, 0.3, true, 5)) == values(y));
  CHECK(values(ops::dropout(x, 0.3, false, 5)) == values(x));
  CHECK_THROWS_AS(ops::dropout(x, 1.0, true, 5), ConfigError);
}

TEST_CASE("l2_normalize examples and idempotence") {
  CHECK(values(ops::l2_normalize(Tensor({1, 3}, {1, 0, 0}))) == std::vector<double>{1, 0, 0});
  const auto v = values(ops::l2_normalize(Tensor({1, 2}, {3, 4})));
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(ops::l2_normalize(Tensor({1, 2}, {0, 0})), DegenerateEmbeddingError);

  const Tensor x = make_tensor({16, 9}, InitSpec::uniform(-3, 3), 21);
  const Tensor once = ops::l2_normalize(x);
  const Tensor twice = ops::l2_normalize(once);
  for (std::size_t i = 0; i < 16; ++i) {
    double norm = 0;
    for (std::size_t j = 0; j < 9; ++j) norm += once.at(i * 9 + j) * once.at(i * 9 + j);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  }
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(once.at(i) - twice.at(i)) < 1e-6);
}

TEST_CASE("backward examples") {
  Tape tape;
  Tensor x = leaf({3}, {1, 2, 3});
  tape.backward(ops::sum(x, &tape));
  CHECK(values(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{1, 1, 1});

  Tape t2;
  Tensor y = leaf({1}, {3});
  t2.backward(ops::sum(ops::mul(y, y, &t2), &t2));
  CHECK(y.grad()[0] == doctest::Approx(6));
}

TEST_CASE("gradients accumulate across uses and across backward calls") {
  Tensor x = leaf({2}, {1, -2});
  {
    Tape tape;
    // loss = sum(x + x) uses x twice.
    tape.backward(ops::sum(ops::add(x, x, &tape), &tape));
    CHECK(x.grad()[0] == doctest::Approx(2));
  }
  {
    Tape tape;
    tape.backward(ops::sum(ops::scale(x, 3.0, &tape), &tape));
  }
  CHECK(x.grad()[0] == doctest::Approx(5));
  CHECK(x.grad()[1] == doctest::Approx(5));
  x.zero_grad();
  CHECK(x.grad()[0] == 0);
}

TEST_CASE("backward errors") {
  Tape tape;
  Tensor x = leaf({2}, {1, 2});
  CHECK_THROWS_AS(tape.backward(ops::scale(x, 2.0, &tape)), ShapeError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1)), GraphError);
  Tape other;
  const Tensor foreign = ops::sum(x, &other);
  CHECK_THROWS_AS(tape.backward(foreign), GraphError);
}

TEST_CASE("nodes are recorded only when an input requires grad") {
  Tape tape;
  const Tensor a({2}, {1, 2});
  ops::relu(a, &tape);
  CHECK(tape.size() == 0);
  Tensor b = leaf({2}, {1, 2});
  const Tensor r = ops::relu(b, &tape);
  CHECK(tape.size() == 1);
  CHECK(tape.op_name(0) == "relu");
  CHECK(r.requires_grad());
  CHECK_FALSE(r.detach().requires_grad());
}

TEST_CASE("ops are deterministic and keep finite inputs finite") {
  const Tensor x = make_tensor({2, 3, 6, 6}, InitSpec::uniform(-2, 2), 4);
  const Tensor w = make_tensor({4, 3, 3, 3}, InitSpec::kaiming_normal(27), 5);
  const Tensor b = make_tensor({4}, InitSpec::uniform(-1, 1), 6);
  const auto run = [&] {
    Tensor y = ops::relu(ops::conv2d(x, w, b, {2, 1}));
    y = ops::dropout(ops::batch_flatten(y), 0.2, true, 77);
    return ops::l2_normalize(y);
  };
  const Tensor y1 = run(), y2 = run();
  CHECK(values(y1) == values(y2));
  for (double v : values(y1)) CHECK(std::isfinite(v));
}

TEST_CASE("softmax cross entropy matches a hand computation") {
  // logits [0, ln 3]: p(label 1) = 3/4.
  const Tensor z({1, 2}, {0, static_cast<Real>(std::log(3.0))});
  const int label[] = {1};
  CHECK(ops::softmax_cross_entropy(z, label).item() == doctest::Approx(-std::log(0.75)).epsilon(1e-6));
  const int bad[] = {2};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(z, bad), LabelError);
  // Large logits stay finite through the max shift.
  const Tensor big({1, 2}, {1000, 0});
  const int first[] = {0};
  CHECK(std::isfinite(ops::softmax_cross_entropy(big, first).item()));
}
