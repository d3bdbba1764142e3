// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mvitac/model.hpp"
#include "mvitac/tensor.hpp"

namespace mvitac {

struct LossWeights {
  double tau = 0.07;
  double lambda_inter = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double l_vv = 0.0;
  double l_tt = 0.0;
  double l_vt = 0.0;
  double l_tv = 0.0;
  double l_mm = 0.0;
};

// InfoNCE with in-batch negatives. Row i of `queries` is scored against every
// row of `keys`; key i is its positive and the other N-1 keys are negatives.
// The denominator includes the positive. Returns the mean over rows.
Tensor info_nce(const Tensor& queries, const Tensor& keys, double tau, Tape* tape = nullptr);

struct CombinedLoss {
  Tensor total;  // differentiable l_mm
  LossBreakdown parts;
};

// l_mm = l_vv + l_tt + lambda_inter (l_vt + l_tv)
CombinedLoss combined_loss(const EmbeddingSet& z, const LossWeights& weights, Tape* tape = nullptr);

}  // namespace mvitac
