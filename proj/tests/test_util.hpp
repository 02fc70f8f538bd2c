// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "acmp/tensor.hpp"

namespace acmp::testing {

inline Tensor rand_tensor(std::vector<int64_t> shape, uint64_t seed,
                          double std_dev = 1.0, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std_dev);
  Tensor t(std::move(shape), requires_grad);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Random rows forming valid probability distributions.
inline Tensor rand_prob_rows(int64_t n, int64_t v, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  Tensor t({n, v});
  for (int64_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < v; ++j) {
      double x = dist(rng);
      t.data()[r * v + j] = x;
      s += x;
    }
    for (int64_t j = 0; j < v; ++j) t.data()[r * v + j] /= s;
  }
  return t;
}

}  // namespace acmp::testing
