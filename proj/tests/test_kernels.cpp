// SPDX-License-Identifier: Apache-2.0

// The OpenMP kernels against the serial reference loops, and bit-stability of
// the parallel kernels across thread counts.

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <vector>

#include "mvitac/kernels.hpp"
#include "mvitac/rng.hpp"

using namespace mvitac;
using namespace mvitac::kernels;

namespace {

std::vector<Real> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Real> v(n);
  for (Real& x : v) x = static_cast<Real>(2.0 * uniform01(rng) - 1.0);
  return v;
}

void check_close(const std::vector<Real>& a, const std::vector<Real>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) / (1.0 + std::abs(static_cast<double>(b[i]))));
  }
  CHECK(worst < tol);
}

constexpr double kTol = sizeof(Real) == sizeof(float) ? 1e-5 : 1e-12;

ConvGeometry geometry(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t f, std::size_t k,
                      std::size_t stride, std::size_t pad) {
  ConvGeometry g{n, c, h, w, f, k, k, stride, pad};
  REQUIRE(g.finalize());
  return g;
}

struct ThreadCount {
  explicit ThreadCount(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("matmul variants match the reference") {
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 13, 5}, {64, 33, 17}, {3, 128, 9}}) {
    const auto a = random_buffer(m * k, 1), b = random_buffer(k * n, 2);
    std::vector<Real> ref(m * n), out(m * n);
    reference::matmul(a, b, ref, m, k, n);
    matmul(a, b, out, m, k, n);
    check_close(out, ref, kTol);

    // a^T stored as [k,m]; b^T stored as [n,k].
    std::vector<Real> at(k * m), bt(n * k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    matmul_tn(at, b, out, m, k, n);
    check_close(out, ref, kTol);
    matmul_nt(a, bt, out, m, k, n);
    check_close(out, ref, kTol);
  }
}

TEST_CASE("conv kernels match the reference") {
  for (const auto& g : {geometry(2, 3, 9, 9, 4, 3, 2, 1), geometry(1, 1, 5, 7, 2, 1, 1, 0),
                        geometry(3, 2, 8, 6, 5, 3, 1, 1), geometry(2, 4, 11, 11, 3, 5, 3, 2)}) {
    const auto x = random_buffer(g.input_size(), 3), w = random_buffer(g.weight_size(), 4);
    const auto bias = random_buffer(g.filters, 5), dy = random_buffer(g.output_size(), 6);
    std::vector<Real> y_ref(g.output_size()), y(g.output_size());
    reference::conv2d_forward(g, x, w, bias, y_ref);
    conv2d_forward(g, x, w, bias, y);
    check_close(y, y_ref, kTol);

    std::vector<Real> dx_ref(g.input_size()), dx(g.input_size());
    reference::conv2d_backward_input(g, dy, w, dx_ref);
    conv2d_backward_input(g, dy, w, dx);
    check_close(dx, dx_ref, kTol);

    std::vector<Real> dw_ref(g.weight_size()), dw(g.weight_size()), db_ref(g.filters), db(g.filters);
    reference::conv2d_backward_weight(g, dy, x, dw_ref, db_ref);
    conv2d_backward_weight(g, dy, x, dw, db);
    check_close(dw, dw_ref, kTol);
    check_close(db, db_ref, kTol);
  }
}

TEST_CASE("conv geometry") {
  ConvGeometry g{1, 3, 32, 32, 16, 3, 3, 2, 1};
  CHECK(g.finalize());
  CHECK(g.out_h == 16);
  CHECK(g.out_w == 16);
  ConvGeometry empty{1, 1, 2, 2, 1, 5, 5, 1, 0};
  CHECK_FALSE(empty.finalize());
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  const auto g = geometry(4, 3, 16, 16, 8, 3, 2, 1);
  const auto x = random_buffer(g.input_size(), 7), w = random_buffer(g.weight_size(), 8);
  const auto dy = random_buffer(g.output_size(), 9);
  const auto a = random_buffer(37 * 61, 10), b = random_buffer(61 * 23, 11);
  const auto run = [&](int threads) {
    ThreadCount tc(threads);
    std::vector<Real> y(g.output_size()), dx(g.input_size()), dw(g.weight_size()), db(g.filters), c(37 * 23);
    conv2d_forward(g, x, w, {}, y);
    conv2d_backward_input(g, dy, w, dx);
    conv2d_backward_weight(g, dy, x, dw, db);
    matmul(a, b, c, 37, 61, 23);
    std::vector<Real> all;
    for (const auto* v : {&y, &dx, &dw, &db, &c}) all.insert(all.end(), v->begin(), v->end());
    return all;
  };
  const auto one = run(1);
  CHECK(run(2) == one);
  CHECK(run(3) == one);
  CHECK(run(8) == one);
}
