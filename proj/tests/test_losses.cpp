// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "grad_cases.hpp"
#include "mvitac/error.hpp"
#include "mvitac/losses.hpp"
#include "mvitac/ops.hpp"

using namespace mvitac;
using mvitac::testing::uniform_tensor;

namespace {

Tensor unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  return ops::l2_normalize(uniform_tensor({n, d}, seed));
}

// Independent double-precision InfoNCE straight from the definition.
double oracle_info_nce(const Tensor& q, const Tensor& k, double tau) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(q.at(i * d + c)) * k.at(j * d + c);
      s[j] = dot / tau;
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (double v : s) z += std::exp(v - mx);
    total += -(s[i] - mx - std::log(z));
  }
  return total / static_cast<double>(n);
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  const std::size_t d = t.dim(1);
  std::vector<Real> out(t.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = t.at(perm[i] * d + c);
  return Tensor(t.shape(), out);
}

// Multiplies rows by a random orthogonal matrix (Gram-Schmidt on Gaussians).
Tensor rotate(const Tensor& t, std::uint64_t seed) {
  const std::size_t d = t.dim(1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> basis;
  while (basis.size() < d) {
    std::vector<double> v(d);
    for (double& x : v) x = g(rng);
    for (const auto& b : basis) {
      const double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t c = 0; c < d; ++c) v[c] -= p * b[c];
    }
    const double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= nv;
    basis.push_back(v);
  }
  std::vector<Real> out(t.size());
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < d; ++c) acc += basis[r][c] * t.at(i * d + c);
      out[i * d + r] = static_cast<Real>(acc);
    }
  return Tensor(t.shape(), out);
}

EmbeddingSet random_set(std::size_t n, std::size_t d, std::uint64_t seed) {
  EmbeddingSet z;
  Tensor* slots[] = {&z.vv_q, &z.vv_k, &z.tt_q, &z.tt_k, &z.vt_q, &z.vt_k, &z.tv_q, &z.tv_k};
  for (std::size_t i = 0; i < 8; ++i) *slots[i] = unit_rows(n, d, seed + i);
  return z;
}

}  // namespace

TEST_CASE("identical rows give ln N") {
  // Every similarity equals 1/tau, so each row's softmax is uniform.
  std::vector<Real> ones(8 * 4, Real(0.5));
  const Tensor q({8, 4}, ones);
  CHECK(info_nce(q, q, 0.5).item() == doctest::Approx(std::log(8.0)).epsilon(1e-6));
  CHECK(info_nce(q, q, 0.07).item() == doctest::Approx(2.0794).epsilon(1e-4));
}

TEST_CASE("orthonormal pairs") {
  // q = k = I_8 at tau 1: positive logit 1, seven negatives at 0.
  std::vector<Real> eye(64, 0);
  for (int i = 0; i < 8; ++i) eye[i * 8 + i] = 1;
  const Tensor q({8, 8}, eye);
  CHECK(info_nce(q, q, 1.0).item() == doctest::Approx(std::log(std::exp(1.0) + 7.0) - 1.0).epsilon(1e-6));
  CHECK(info_nce(q, q, 1.0).item() == doctest::Approx(1.2741).epsilon(1e-4));
  // At small tau the positive dominates.
  CHECK(info_nce(q, q, 0.07).item() < 1e-5);
}

TEST_CASE("info_nce matches the independent oracle") {
  for (double tau : {1.0, 0.5, 0.2, 0.07}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const Tensor q = unit_rows(9, 6, seed), k = unit_rows(9, 6, seed + 100);
      CHECK(info_nce(q, k, tau).item() == doctest::Approx(oracle_info_nce(q, k, tau)).epsilon(1e-5));
    }
  }
}

TEST_CASE("info_nce is invariant to a joint row permutation") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = unit_rows(10, 5, 10 + trial), k = unit_rows(10, 5, 50 + trial);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double a = info_nce(q, k, 0.2).item();
    const double b = info_nce(permute_rows(q, perm), permute_rows(k, perm), 0.2).item();
    CHECK(std::abs(a - b) < 1e-6 * std::max(1.0, std::abs(a)) + (sizeof(Real) == 4 ? 1e-6 : 0.0));
  }
}

TEST_CASE("info_nce is invariant to a shared rotation") {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = unit_rows(7, 6, 200 + trial), k = unit_rows(7, 6, 300 + trial);
    const double a = info_nce(q, k, 0.1).item();
    const double b = info_nce(rotate(q, trial), rotate(k, trial), 0.1).item();
    CHECK(std::abs(a - b) < 1e-5 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("info_nce stays finite at small tau") {
  const Tensor q = unit_rows(16, 8, 7);
  const Tensor k = ops::scale(q, -1.0);
  for (double tau : {0.07, 0.01, 0.001}) CHECK(std::isfinite(info_nce(q, k, tau).item()));
}

TEST_CASE("combined loss composition") {
  const EmbeddingSet z = random_set(6, 4, 1);
  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    const auto r = combined_loss(z, {0.3, lambda});
    CHECK(r.parts.l_vv == doctest::Approx(info_nce(z.vv_q, z.vv_k, 0.3).item()));
    CHECK(r.parts.l_tt == doctest::Approx(info_nce(z.tt_q, z.tt_k, 0.3).item()));
    CHECK(r.parts.l_vt == doctest::Approx(info_nce(z.vt_q, z.vt_k, 0.3).item()));
    CHECK(r.parts.l_tv == doctest::Approx(info_nce(z.tv_q, z.tv_k, 0.3).item()));
    const double expect = r.parts.l_vv + r.parts.l_tt + lambda * (r.parts.l_vt + r.parts.l_tv);
    CHECK(r.parts.l_mm == doctest::Approx(expect).epsilon(1e-6));
    CHECK(r.total.item() == doctest::Approx(expect).epsilon(1e-6));
  }
  // lambda 0 reduces to the two intra-modal terms exactly.
  const auto r0 = combined_loss(z, {0.3, 0.0});
  CHECK(r0.total.item() == doctest::Approx(r0.parts.l_vv + r0.parts.l_tt).epsilon(1e-7));
}

TEST_CASE("lambda 0 sends no gradient to the inter embeddings") {
  EmbeddingSet z = random_set(5, 4, 20);
  for (Tensor* t : {&z.vt_q, &z.tv_q, &z.vv_q}) t->set_requires_grad(true);
  Tape tape;
  const auto r = combined_loss(z, {0.2, 0.0}, &tape);
  tape.backward(r.total);
  const auto all_zero = [](const Tensor& t) {
    if (!t.has_grad()) return true;
    return std::all_of(t.grad().begin(), t.grad().end(), [](Real g) { return g == 0; });
  };
  CHECK(all_zero(z.vt_q));
  CHECK(all_zero(z.tv_q));
  CHECK_FALSE(all_zero(z.vv_q));
}

TEST_CASE("loss contract errors") {
  const Tensor q = unit_rows(4, 3, 1);
  CHECK_THROWS_AS(info_nce(q, unit_rows(5, 3, 2), 0.1), ShapeError);
  CHECK_THROWS_AS(info_nce(q, unit_rows(4, 2, 2), 0.1), ShapeError);
  CHECK_THROWS_AS(info_nce(unit_rows(1, 3, 1), unit_rows(1, 3, 2), 0.1), LossContractError);
  CHECK_THROWS_AS(info_nce(q, q, 0.0), ConfigError);
  CHECK_THROWS_AS(info_nce(q, q, -1.0), ConfigError);
  // Rows must be unit norm.
  CHECK_THROWS_AS(info_nce(ops::scale(q, 2.0), q, 0.1), LossContractError);
  CHECK_THROWS_AS((LossWeights{0.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{0.1, -0.5}.validate()), ConfigError);
  CHECK_THROWS_AS(combined_loss(random_set(4, 3, 1), {0.1, -1.0}), ConfigError);
}
