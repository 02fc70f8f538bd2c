// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "acmp/tensor.hpp"

namespace acmp::ops {

// All ops record a backward closure on `tape` when tape is non-null and the
// result requires grad. Passing tape == nullptr gives a plain forward pass
// (used for the frozen teacher and for evaluation).

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
// x[m*n] + bias[n] broadcast over rows.
Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& bias);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& x, double c);
Tensor sum(Tape* tape, const Tensor& x);
Tensor gelu(Tape* tape, const Tensor& x);
// Softmax over the last axis, max-subtracted.
Tensor softmax(Tape* tape, const Tensor& x);
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);
// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<int>& labels);
// Rows of p and q are probability distributions; mean over rows of
// sum p*(ln p - ln q), logs floored at 1e-12.
Tensor kl_divergence(Tape* tape, const Tensor& p, const Tensor& q);

Tensor transpose(Tape* tape, const Tensor& x);
Tensor slice_cols(Tape* tape, const Tensor& x, int64_t start, int64_t count);
Tensor slice_rows(Tape* tape, const Tensor& x, int64_t start, int64_t count);
Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts);
// Adds a large negative constant to entries strictly above the diagonal.
Tensor causal_mask(Tape* tape, const Tensor& scores);
// Gathers table rows by index; backward scatter-adds into the table.
Tensor embedding_rows(Tape* tape, const Tensor& table,
                      const std::vector<int>& indices);

constexpr double kLogFloor = 1e-12;

}  // namespace acmp::ops
