// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "mvitac/real.hpp"

// Dense compute kernels behind the tensor ops. The top-level functions are the
// OpenMP-parallel versions used for training; `reference` holds straightforward
// serial loops kept as the correctness baseline for tests and benchmarks.
//
// Every parallel kernel partitions work by output element (or output row), so
// each value is reduced in a fixed order and results do not depend on the
// thread count.
namespace mvitac::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  // Fills out_h/out_w; returns false when the output would be empty.
  bool finalize();
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t weight_size() const { return filters * in_channels * kernel_h * kernel_w; }
  std::size_t output_size() const { return batch * filters * out_h * out_w; }
};

// c[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
            std::size_t n);
// c[m,n] = a[k,m]^T * b[k,n]
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
               std::size_t n);
// c[m,n] = a[m,k] * b[n,k]^T
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
               std::size_t n);

// y[N,F,OH,OW] = conv(x[N,C,H,W], w[F,C,KH,KW]) + bias[F]; bias may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y);
// dx = d(conv)/dx applied to dy. Overwrites dx.
void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx);
// dw (and dbias when non-empty) from dy and x. Overwrites both.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> x,
                            std::span<Real> dw, std::span<Real> dbias);

namespace reference {

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
            std::size_t n);
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> x,
                            std::span<Real> dw, std::span<Real> dbias);

}  // namespace reference

}  // namespace mvitac::kernels
