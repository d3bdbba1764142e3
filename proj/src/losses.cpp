// SPDX-License-Identifier: Apache-2.0

#include "mvitac/losses.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mvitac/error.hpp"
#include "mvitac/ops.hpp"

namespace mvitac {

namespace {

constexpr double kUnitTolerance = 1e-3;

void check_unit_rows(const Tensor& t, const char* which) {
  const std::size_t n = t.dim(0), d = t.dim(1);
  auto v = t.data();
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(v[i * d + j]) * v[i * d + j];
    if (std::abs(std::sqrt(ss) - 1.0) > kUnitTolerance) {
      throw LossContractError(std::string("info_nce: ") + which + " row " + std::to_string(i) + " has norm " +
                              std::to_string(std::sqrt(ss)) + "; inputs must be l2-normalized");
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("loss: tau must be > 0, got " + std::to_string(tau));
  if (!(lambda_inter >= 0.0) || !std::isfinite(lambda_inter)) {
    throw ConfigError("loss: lambda_inter must be >= 0, got " + std::to_string(lambda_inter));
  }
}

Tensor info_nce(const Tensor& queries, const Tensor& keys, double tau, Tape* tape) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.shape() != keys.shape()) {
    throw ShapeError("info_nce: queries " + to_string(queries.shape()) + " and keys " + to_string(keys.shape()) +
                     " must both be [N,D]");
  }
  if (!(tau > 0.0)) throw ConfigError("info_nce: tau must be > 0");
  const std::size_t n = queries.dim(0);
  if (n < 2) throw LossContractError("info_nce: batch of " + std::to_string(n) + " has no negatives (need N >= 2)");
  check_unit_rows(queries, "query");
  check_unit_rows(keys, "key");

  const Tensor logits = ops::scale(ops::matmul(queries, ops::transpose(keys, tape), tape), 1.0 / tau, tape);
  std::vector<int> positives(n);
  std::iota(positives.begin(), positives.end(), 0);
  return ops::softmax_cross_entropy(logits, positives, tape);
}

CombinedLoss combined_loss(const EmbeddingSet& z, const LossWeights& weights, Tape* tape) {
  weights.validate();
  const Tensor l_vv = info_nce(z.vv_q, z.vv_k, weights.tau, tape);
  const Tensor l_tt = info_nce(z.tt_q, z.tt_k, weights.tau, tape);
  const Tensor l_vt = info_nce(z.vt_q, z.vt_k, weights.tau, tape);
  const Tensor l_tv = info_nce(z.tv_q, z.tv_k, weights.tau, tape);

  CombinedLoss out;
  const Tensor intra = ops::add(l_vv, l_tt, tape);
  const Tensor inter = ops::scale(ops::add(l_vt, l_tv, tape), weights.lambda_inter, tape);
  out.total = ops::add(intra, inter, tape);

  out.parts.l_vv = l_vv.item();
  out.parts.l_tt = l_tt.item();
  out.parts.l_vt = l_vt.item();
  out.parts.l_tv = l_tv.item();
  out.parts.l_mm = out.parts.l_vv + out.parts.l_tt + weights.lambda_inter * (out.parts.l_vt + out.parts.l_tv);
  return out;
}

}  // namespace mvitac
