// SPDX-License-Identifier: Apache-2.0

#include "mvitac/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace mvitac::kernels {

namespace {

using Index = std::int64_t;  // OpenMP loop counters must be signed

void transpose(std::span<const Real> src, std::span<Real> dst, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// col[(c*KH+ky)*KW+kx, n*OH*OW + oy*OW + ox]
void im2col(const ConvGeometry& g, std::span<const Real> x, std::vector<Real>& col) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t cols = g.batch * plane;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  col.assign(rows * cols, Real(0));
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const std::size_t kx = r % g.kernel_w;
    const std::size_t ky = (r / g.kernel_w) % g.kernel_h;
    const std::size_t c = r / (g.kernel_w * g.kernel_h);
    Real* dst = col.data() + r * cols;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const Real* src = x.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.padding);
        Real* out = dst + n * plane + oy * g.out_w;
        if (iy < 0 || iy >= static_cast<Index>(g.in_h)) continue;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.padding);
          if (ix >= 0 && ix < static_cast<Index>(g.in_w)) out[ox] = src[iy * g.in_w + ix];
        }
      }
    }
  }
}

// dy[N,F,OH,OW] -> [F, N*OH*OW]
std::vector<Real> filter_major(const ConvGeometry& g, std::span<const Real> dy) {
  const std::size_t plane = g.out_h * g.out_w;
  std::vector<Real> out(g.filters * g.batch * plane);
#pragma omp parallel for schedule(static)
  for (Index f = 0; f < static_cast<Index>(g.filters); ++f) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      std::copy_n(dy.data() + (n * g.filters + f) * plane, plane, out.data() + (f * g.batch + n) * plane);
    }
  }
  return out;
}

}  // namespace

bool ConvGeometry::finalize() {
  if (stride == 0 || in_h + 2 * padding < kernel_h || in_w + 2 * padding < kernel_w) return false;
  out_h = (in_h + 2 * padding - kernel_h) / stride + 1;
  out_w = (in_w + 2 * padding - kernel_w) / stride + 1;
  return out_h > 0 && out_w > 0;
}

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
            std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    Real* row = c.data() + i * n;
    std::fill(row, row + n, Real(0));
    const Real* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
               std::size_t n) {
  std::vector<Real> at(m * k);
  transpose(a, at, k, m);
  matmul(at, b, c, m, k, n);
}

void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
               std::size_t n) {
  std::vector<Real> bt(k * n);
  transpose(b, bt, n, k);
  matmul(a, bt, c, m, k, n);
}

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y) {
  std::vector<Real> col;
  im2col(g, x, col);
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t cols = g.batch * plane;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  std::vector<Real> out(g.filters * cols);
  matmul(w, col, out, g.filters, rows, cols);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    for (Index f = 0; f < static_cast<Index>(g.filters); ++f) {
      const Real b = bias.empty() ? Real(0) : bias[f];
      const Real* src = out.data() + f * cols + n * plane;
      Real* dst = y.data() + (n * g.filters + f) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t cols = g.batch * plane;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  const std::vector<Real> dyf = filter_major(g, dy);
  std::vector<Real> dcol(rows * cols);
  matmul_tn(w, dyf, dcol, rows, g.filters, cols);
  std::fill(dx.begin(), dx.end(), Real(0));
  // col2im: each (n, c) input plane is owned by one iteration.
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    for (Index c = 0; c < static_cast<Index>(g.in_channels); ++c) {
      Real* dst = dx.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Real* src = dcol.data() + ((c * g.kernel_h + ky) * g.kernel_w + kx) * cols + n * plane;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.padding);
            if (iy < 0 || iy >= static_cast<Index>(g.in_h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.padding);
              if (ix >= 0 && ix < static_cast<Index>(g.in_w)) dst[iy * g.in_w + ix] += src[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> x,
                            std::span<Real> dw, std::span<Real> dbias) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t cols = g.batch * plane;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  std::vector<Real> col;
  im2col(g, x, col);
  const std::vector<Real> dyf = filter_major(g, dy);
  matmul_nt(dyf, col, dw, g.filters, cols, rows);
  if (!dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (Index f = 0; f < static_cast<Index>(g.filters); ++f) {
      Real s = 0;
      const Real* src = dyf.data() + f * cols;
      for (std::size_t i = 0; i < cols; ++i) s += src[i];
      dbias[f] = s;
    }
  }
}

namespace reference {

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          Real s = 0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.padding);
                const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w))
                  continue;
                s += w[((f * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          y[((n * g.filters + f) * g.out_h + oy) * g.out_w + ox] = s + (bias.empty() ? Real(0) : bias[f]);
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t iy = 0; iy < g.in_h; ++iy)
        for (std::size_t ix = 0; ix < g.in_w; ++ix) {
          Real s = 0;
          for (std::size_t f = 0; f < g.filters; ++f)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Index ty = static_cast<Index>(iy + g.padding) - static_cast<Index>(ky);
                const Index tx = static_cast<Index>(ix + g.padding) - static_cast<Index>(kx);
                if (ty < 0 || tx < 0 || ty % static_cast<Index>(g.stride) || tx % static_cast<Index>(g.stride))
                  continue;
                const std::size_t oy = static_cast<std::size_t>(ty) / g.stride;
                const std::size_t ox = static_cast<std::size_t>(tx) / g.stride;
                if (oy >= g.out_h || ox >= g.out_w) continue;
                s += dy[((n * g.filters + f) * g.out_h + oy) * g.out_w + ox] *
                     w[((f * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          dx[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] = s;
        }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> x,
                            std::span<Real> dw, std::span<Real> dbias) {
  for (std::size_t f = 0; f < g.filters; ++f) {
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          Real s = 0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.padding);
                const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<Index>(g.in_h) || ix >= static_cast<Index>(g.in_w))
                  continue;
                s += dy[((n * g.filters + f) * g.out_h + oy) * g.out_w + ox] *
                     x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          dw[((f * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] = s;
        }
    if (!dbias.empty()) {
      Real s = 0;
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) s += dy[(n * g.filters + f) * g.out_h * g.out_w + p];
      dbias[f] = s;
    }
  }
}

}  // namespace reference

}  // namespace mvitac::kernels
