// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>

#include "acmp/tensor.hpp"

namespace acmp {

// f must build a scalar loss from x, recording on the tape when one is given.
using ScalarFn = std::function<Tensor(Tape*, const Tensor&)>;

// Central-difference check of the recorded gradient of f at x.
// Returns the worst relative error over coordinates; near-zero pairs are
// compared absolutely so a linear f reports roundoff-scale error.
inline double grad_check(const ScalarFn& f, Tensor x, double step = 1e-5) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tape tape;
  Tensor loss = f(&tape, x);
  tape.backward(loss);
  std::vector<double> analytic = x.grad();

  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    double saved = x.data()[i];
    x.data()[i] = saved + step;
    double up = f(nullptr, x).item();
    x.data()[i] = saved - step;
    double down = f(nullptr, x).item();
    x.data()[i] = saved;
    double fd = (up - down) / (2.0 * step);
    double a = analytic[static_cast<size_t>(i)];
    double denom = std::max(std::abs(a), std::abs(fd));
    double err = (denom < 1e-10) ? std::abs(a - fd) : std::abs(a - fd) / denom;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace acmp
