// SPDX-License-Identifier: Apache-2.0

// Parallel kernels against the serial reference loops.
// Shapes follow the desk encoder at batch 64.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mvitac/kernels.hpp"

using namespace mvitac;
namespace k = mvitac::kernels;

namespace {

std::vector<Real> filled(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(d(gen));
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<Real> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul(a, b, c, n, n, n);
    } else {
      k::reference::matmul(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

// First two desk conv layers: 3->32 at 32x32 and 32->64 at 16x16.
k::ConvGeometry geometry(int layer) {
  k::ConvGeometry g;
  g.batch = 64;
  g.in_channels = layer == 0 ? 3 : 32;
  g.in_h = g.in_w = layer == 0 ? 32 : 16;
  g.filters = layer == 0 ? 32 : 64;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 2;
  g.padding = 1;
  g.finalize();
  return g;
}

enum class Pass { forward, backward_input, backward_weight };

template <bool Parallel, Pass P>
void BM_conv(benchmark::State& state) {
  const auto g = geometry(static_cast<int>(state.range(0)));
  const auto x = filled(g.input_size(), 3), w = filled(g.weight_size(), 4), bias = filled(g.filters, 5);
  const auto dy = filled(g.output_size(), 6);
  std::vector<Real> y(g.output_size()), dx(g.input_size()), dw(g.weight_size()), db(g.filters);
  for (auto _ : state) {
    if constexpr (P == Pass::forward) {
      Parallel ? k::conv2d_forward(g, x, w, bias, y) : k::reference::conv2d_forward(g, x, w, bias, y);
    } else if constexpr (P == Pass::backward_input) {
      Parallel ? k::conv2d_backward_input(g, dy, w, dx) : k::reference::conv2d_backward_input(g, dy, w, dx);
    } else {
      Parallel ? k::conv2d_backward_weight(g, dy, x, dw, db) : k::reference::conv2d_backward_weight(g, dy, x, dw, db);
    }
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/reference")->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_conv<false, Pass::forward>)->Name("conv_forward/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_conv<true, Pass::forward>)->Name("conv_forward/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_conv<false, Pass::backward_input>)->Name("conv_backward_input/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_conv<true, Pass::backward_input>)->Name("conv_backward_input/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_conv<false, Pass::backward_weight>)->Name("conv_backward_weight/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_conv<true, Pass::backward_weight>)->Name("conv_backward_weight/parallel")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
