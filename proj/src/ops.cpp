// SPDX-License-Identifier: Apache-2.0

#include "mvitac/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mvitac/error.hpp"
#include "mvitac/kernels.hpp"
#include "mvitac/rng.hpp"

namespace mvitac::ops {

namespace {

[[noreturn]] void conformability(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                   " are not conformable");
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
  }
}

kernels::ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, Conv2dParams p) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1)) conformability("conv2d", x, w);
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.filters = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride = p.stride;
  g.padding = p.padding;
  if (!g.finalize()) conformability("conv2d", x, w);
  return g;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) conformability("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  kernels::matmul(a.data(), b.data(), out.mutable_data(), m, k, n);
  if (tape) {
    tape->record("matmul", {a, b}, out, [a, b, m, k, n](std::span<const Real> g) {
      if (a.requires_grad()) {
        std::vector<Real> da(m * k);
        kernels::matmul_nt(g, b.data(), da, m, n, k);
        accumulate_grad(a, da);
      }
      if (b.requires_grad()) {
        std::vector<Real> db(k * n);
        kernels::matmul_tn(a.data(), g, db, k, m, n);
        accumulate_grad(b, db);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a, Tape* tape) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  if (tape) {
    tape->record("transpose", {a}, out, [a, r, c](std::span<const Real> g) {
      std::vector<Real> da(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] = g[j * r + i];
      accumulate_grad(a, da);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dParams params, Tape* tape) {
  const kernels::ConvGeometry g = conv_geometry(x, weight, params);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.filters)) conformability("conv2d", weight, bias);
  Tensor out({g.batch, g.filters, g.out_h, g.out_w});
  kernels::conv2d_forward(g, x.data(), weight.data(), bias.defined() ? bias.data() : std::span<const Real>{},
                          out.mutable_data());
  if (tape) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    tape->record("conv2d", std::move(inputs), out, [x, weight, bias, g](std::span<const Real> dy) {
      if (x.requires_grad()) {
        std::vector<Real> dx(g.input_size());
        kernels::conv2d_backward_input(g, dy, weight.data(), dx);
        accumulate_grad(x, dx);
      }
      const bool want_bias = bias.defined() && bias.requires_grad();
      if (weight.requires_grad() || want_bias) {
        std::vector<Real> dw(g.weight_size());
        std::vector<Real> db(want_bias ? g.filters : 0);
        kernels::conv2d_backward_weight(g, dy, x.data(), dw, db);
        accumulate_grad(weight, dw);
        if (want_bias) accumulate_grad(bias, db);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  // Written so a NaN input stays NaN and reaches the divergence check.
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] < Real(0) ? Real(0) : src[i];
  if (tape) {
    tape->record("relu", {x}, out, [x](std::span<const Real> g) {
      auto src = x.data();
      std::vector<Real> dx(src.size());
      for (std::size_t i = 0; i < src.size(); ++i) dx[i] = src[i] > Real(0) ? g[i] : Real(0);
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x, Tape* tape) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor out({x.dim(0), x.dim(1)});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    Real s = 0;
    for (std::size_t p = 0; p < plane; ++p) s += src[r * plane + p];
    dst[r] = s / static_cast<Real>(plane);
  }
  if (tape) {
    tape->record("global_avg_pool", {x}, out, [x, rows, plane](std::span<const Real> g) {
      std::vector<Real> dx(rows * plane);
      for (std::size_t r = 0; r < rows; ++r) {
        const Real v = g[r] / static_cast<Real>(plane);
        std::fill_n(dx.begin() + r * plane, plane, v);
      }
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) conformability("add", a, b);
  Tensor out(a.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a.data()[i] + b.data()[i];
  if (tape) {
    tape->record("add", {a, b}, out, [a, b](std::span<const Real> g) {
      accumulate_grad(a, g);
      accumulate_grad(b, g);
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) conformability("add_bias", x, bias);
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor out(x.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) dst[i * d + j] = x.data()[i * d + j] + bias.data()[j];
  if (tape) {
    tape->record("add_bias", {x, bias}, out, [x, bias, n, d](std::span<const Real> g) {
      accumulate_grad(x, g);
      if (bias.requires_grad()) {
        std::vector<Real> db(d, Real(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
        accumulate_grad(bias, db);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c, Tape* tape) {
  const Real s = static_cast<Real>(c);
  Tensor out(x.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x.data()[i] * s;
  if (tape) {
    tape->record("scale", {x}, out, [x, s](std::span<const Real> g) {
      std::vector<Real> dx(g.begin(), g.end());
      for (Real& v : dx) v *= s;
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) conformability("mul", a, b);
  Tensor out(a.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a.data()[i] * b.data()[i];
  if (tape) {
    tape->record("mul", {a, b}, out, [a, b](std::span<const Real> g) {
      std::vector<Real> d(g.size());
      if (a.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * b.data()[i];
        accumulate_grad(a, d);
      }
      if (b.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * a.data()[i];
        accumulate_grad(b, d);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  double s = 0.0;
  for (Real v : x.data()) s += v;
  Tensor out = Tensor::scalar(static_cast<Real>(s));
  if (tape) {
    tape->record("sum", {x}, out, [x](std::span<const Real> g) {
      std::vector<Real> dx(x.size(), g[0]);
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, bool train, std::uint64_t seed, Tape* tape) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: probability must be in [0,1), got " + std::to_string(p));
  if (!train || p == 0.0) {
    Tensor out = x.detach();
    if (tape) {
      tape->record("dropout", {x}, out, [x](std::span<const Real> g) { accumulate_grad(x, g); });
    }
    return out;
  }
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  std::vector<Real> mask(x.size());
  Rng rng(mix_seed(seed));
  for (Real& m : mask) m = uniform01(rng) < p ? Real(0) : keep_scale;
  Tensor out(x.shape());
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x.data()[i] * mask[i];
  if (tape) {
    tape->record("dropout", {x}, out, [x, mask = std::move(mask)](std::span<const Real> g) {
      std::vector<Real> dx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * mask[i];
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor batch_flatten(const Tensor& x, Tape* tape) {
  if (x.rank() < 1) throw ShapeError("batch_flatten: rank 0 input");
  const std::size_t n = x.dim(0);
  Tensor out({n, x.size() / n}, std::vector<Real>(x.data().begin(), x.data().end()));
  if (tape) {
    tape->record("batch_flatten", {x}, out, [x](std::span<const Real> g) { accumulate_grad(x, g); });
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, Tape* tape) {
  require_rank("l2_normalize", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<Real> norms(n);
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(src[i * d + j]) * src[i * d + j];
    const double norm = std::sqrt(ss);
    if (!(norm >= kNormFloor)) {
      throw DegenerateEmbeddingError("l2_normalize: row " + std::to_string(i) + " has norm " +
                                     std::to_string(norm) + " below the floor (collapsed embedding)");
    }
    norms[i] = static_cast<Real>(norm);
    for (std::size_t j = 0; j < d; ++j) dst[i * d + j] = static_cast<Real>(src[i * d + j] / norm);
  }
  if (tape) {
    tape->record("l2_normalize", {x}, out, [x, out, n, d, norms = std::move(norms)](std::span<const Real> g) {
      auto y = out.data();
      std::vector<Real> dx(n * d);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(y[i * d + j]) * g[i * d + j];
        for (std::size_t j = 0; j < d; ++j) {
          dx[i * d + j] = static_cast<Real>((g[i * d + j] - y[i * d + j] * dot) / norms[i]);
        }
      }
      accumulate_grad(x, dx);
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tape* tape) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     to_string(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(c) +
                       ")");
    }
  }
  auto z = logits.data();
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = z[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max<double>(mx, z[i * c + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(static_cast<double>(z[i * c + j]) - mx);
      denom += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= denom;
    total += -(static_cast<double>(z[i * c + labels[i]]) - mx - std::log(denom));
  }
  Tensor out = Tensor::scalar(static_cast<Real>(total / static_cast<double>(n)));
  if (tape) {
    std::vector<int> ys(labels.begin(), labels.end());
    tape->record("softmax_cross_entropy", {logits}, out,
                 [logits, n, c, probs = std::move(probs), ys = std::move(ys)](std::span<const Real> g) {
                   const double s = static_cast<double>(g[0]) / static_cast<double>(n);
                   std::vector<Real> dz(n * c);
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = 0; j < c; ++j) {
                       const double target = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                       dz[i * c + j] = static_cast<Real>(s * (probs[i * c + j] - target));
                     }
                   }
                   accumulate_grad(logits, dz);
                 });
  }
  return out;
}

Tensor concat_columns(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) conformability("concat_columns", a, b);
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * da, da, dst.begin() + i * (da + db));
    std::copy_n(b.data().begin() + i * db, db, dst.begin() + i * (da + db) + da);
  }
  return out;
}

Tensor op_forward(const OpSpec& spec, std::span<const Tensor> inputs, Tape* tape) {
  auto need = [&](std::size_t count, const char* op) {
    if (inputs.size() != count) {
      throw ShapeError(std::string(op) + ": expected " + std::to_string(count) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
  };
  switch (spec.kind) {
    case OpSpec::Kind::matmul:
      need(2, "matmul");
      return matmul(inputs[0], inputs[1], tape);
    case OpSpec::Kind::conv2d:
      if (inputs.size() == 3) return conv2d(inputs[0], inputs[1], inputs[2], spec.conv, tape);
      need(2, "conv2d");
      return conv2d(inputs[0], inputs[1], Tensor{}, spec.conv, tape);
    case OpSpec::Kind::relu:
      need(1, "relu");
      return relu(inputs[0], tape);
    case OpSpec::Kind::global_avg_pool:
      need(1, "global_avg_pool");
      return global_avg_pool(inputs[0], tape);
    case OpSpec::Kind::add:
      need(2, "add");
      return add(inputs[0], inputs[1], tape);
    case OpSpec::Kind::scale:
      need(1, "scale");
      return scale(inputs[0], spec.scale, tape);
    case OpSpec::Kind::dropout:
      need(1, "dropout");
      return dropout(inputs[0], spec.dropout_p, spec.train, spec.seed, tape);
    case OpSpec::Kind::batch_flatten:
      need(1, "batch_flatten");
      return batch_flatten(inputs[0], tape);
  }
  throw ShapeError("op_forward: unknown op kind");
}

}  // namespace mvitac::ops
