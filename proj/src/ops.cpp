// SPDX-License-Identifier: Apache-2.0
#include "acmp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace acmp::ops {
namespace {

void check_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(who) + ": expected rank-2 tensor, got " +
                                shape_str(t.shape()));
  }
}

int64_t last_dim(const Tensor& t) {
  if (t.rank() == 0) throw std::invalid_argument("empty tensor");
  return t.shape().back();
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T, B is [n x k]
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k x n] += A^T * B, A is [m x k], B is [m x n]
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

bool wants_grad(const Tensor& a) { return a.requires_grad(); }
bool wants_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

constexpr double kMaskValue = -1e30;

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n}, wants_grad(a, b));
  gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (tape && out.requires_grad()) {
    tape->push([a, b, out, m, k, n](GradStore& gs) {
      const auto& go = gs.adj(out);
      if (a.requires_grad())
        gemm_nt(go.data(), b.data().data(), gs.adj(a).data(), m, n, k);
      if (b.requires_grad())
        gemm_tn(a.data().data(), go.data(), gs.adj(b).data(), m, k, n);
    });
  }
  return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape(), wants_grad(a, b));
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (tape && out.requires_grad()) {
    tape->push([a, b, out](GradStore& gs) {
      const auto& go = gs.adj(out);
      if (a.requires_grad()) {
        auto& ga = gs.adj(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = gs.adj(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& bias) {
  int64_t n = last_dim(x);
  if (bias.size() != n) {
    throw std::invalid_argument("add_bias: bias length " +
                                std::to_string(bias.size()) +
                                " does not match last dim of " +
                                shape_str(x.shape()));
  }
  int64_t rows = x.size() / n;
  Tensor out(x.shape(), wants_grad(x, bias));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j)
      out.data()[r * n + j] = x.data()[r * n + j] + bias.data()[j];
  if (tape && out.requires_grad()) {
    tape->push([x, bias, out, rows, n](GradStore& gs) {
      const auto& go = gs.adj(out);
      if (x.requires_grad()) {
        auto& gx = gs.adj(x);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (bias.requires_grad()) {
        auto& gb = gs.adj(bias);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape(), wants_grad(a, b));
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (tape && out.requires_grad()) {
    tape->push([a, b, out](GradStore& gs) {
      const auto& go = gs.adj(out);
      if (a.requires_grad()) {
        auto& ga = gs.adj(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& gb = gs.adj(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.data()[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& x, double c) {
  Tensor out(x.shape(), wants_grad(x));
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * c;
  if (tape && out.requires_grad()) {
    tape->push([x, out, c](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * c;
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s, wants_grad(x));
  if (tape && out.requires_grad()) {
    tape->push([x, out](GradStore& gs) {
      double go = gs.adj(out)[0];
      auto& gx = gs.adj(x);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += go;
    });
  }
  return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  Tensor out(x.shape(), wants_grad(x));
  for (int64_t i = 0; i < x.size(); ++i) {
    double v = x.data()[i];
    double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    out.data()[i] = v * cdf;
  }
  if (tape && out.requires_grad()) {
    tape->push([x, out](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (size_t i = 0; i < go.size(); ++i) {
        double v = x.data()[i];
        double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
  int64_t v = last_dim(x);
  int64_t rows = x.size() / v;
  Tensor out(x.shape(), wants_grad(x));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * v;
    double* yi = out.data().data() + r * v;
    double mx = xi[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    for (int64_t j = 0; j < v; ++j) yi[j] /= z;
  }
  if (tape && out.requires_grad()) {
    tape->push([x, out, rows, v](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (int64_t r = 0; r < rows; ++r) {
        const double* yi = out.data().data() + r * v;
        const double* gi = go.data() + r * v;
        double dot = 0.0;
        for (int64_t j = 0; j < v; ++j) dot += gi[j] * yi[j];
        for (int64_t j = 0; j < v; ++j)
          gx[r * v + j] += yi[j] * (gi[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be positive");
  int64_t d = last_dim(x);
  if (gain.size() != d || bias.size() != d) {
    throw std::invalid_argument("layer_norm: gain/bias length does not match " +
                                shape_str(x.shape()));
  }
  int64_t rows = x.size() / d;
  Tensor out(x.shape(), x.requires_grad() || gain.requires_grad() ||
                            bias.requires_grad());
  // Saved standardized values for backward.
  std::vector<double> xhat(static_cast<size_t>(x.size()));
  std::vector<double> inv_sigma(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < d; ++j) {
      double h = (xi[j] - mean) * is;
      xhat[static_cast<size_t>(r * d + j)] = h;
      out.data()[r * d + j] = h * gain.data()[j] + bias.data()[j];
    }
  }
  if (tape && out.requires_grad()) {
    tape->push([x, gain, bias, out, rows, d, xhat = std::move(xhat),
                inv_sigma = std::move(inv_sigma)](GradStore& gs) {
      const auto& go = gs.adj(out);
      for (int64_t r = 0; r < rows; ++r) {
        const double* gi = go.data() + r * d;
        const double* hi = xhat.data() + r * d;
        if (gain.requires_grad()) {
          auto& gg = gs.adj(gain);
          for (int64_t j = 0; j < d; ++j) gg[j] += gi[j] * hi[j];
        }
        if (bias.requires_grad()) {
          auto& gb = gs.adj(bias);
          for (int64_t j = 0; j < d; ++j) gb[j] += gi[j];
        }
        if (x.requires_grad()) {
          auto& gx = gs.adj(x);
          double m1 = 0.0, m2 = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            double dh = gi[j] * gain.data()[j];
            m1 += dh;
            m2 += dh * hi[j];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          double is = inv_sigma[static_cast<size_t>(r)];
          for (int64_t j = 0; j < d; ++j) {
            double dh = gi[j] * gain.data()[j];
            gx[r * d + j] += is * (dh - m1 - hi[j] * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<int>& labels) {
  check_rank2(logits, "cross_entropy");
  int64_t n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw std::invalid_argument("cross_entropy: expected " + std::to_string(n) +
                                " labels, got " + std::to_string(labels.size()));
  }
  for (int lb : labels) {
    if (lb < 0 || lb >= v) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(lb) +
                              " outside [0, " + std::to_string(v) + ")");
    }
  }
  // Save softmax probabilities for the backward pass.
  std::vector<double> probs(static_cast<size_t>(n * v));
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const double* xi = logits.data().data() + r * v;
    double mx = xi[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(xi[j] - mx);
    double logz = std::log(z) + mx;
    loss -= xi[labels[static_cast<size_t>(r)]] - logz;
    for (int64_t j = 0; j < v; ++j)
      probs[static_cast<size_t>(r * v + j)] = std::exp(xi[j] - logz);
  }
  loss /= static_cast<double>(n);
  Tensor out = Tensor::scalar(loss, wants_grad(logits));
  if (tape && out.requires_grad()) {
    tape->push([logits, labels, out, n, v, probs = std::move(probs)](GradStore& gs) {
      double go = gs.adj(out)[0];
      auto& gx = gs.adj(logits);
      double inv_n = 1.0 / static_cast<double>(n);
      for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < v; ++j) {
          double p = probs[static_cast<size_t>(r * v + j)];
          double onehot = (j == labels[static_cast<size_t>(r)]) ? 1.0 : 0.0;
          gx[r * v + j] += go * inv_n * (p - onehot);
        }
      }
    });
  }
  return out;
}

Tensor kl_divergence(Tape* tape, const Tensor& p, const Tensor& q) {
  check_rank2(p, "kl_divergence");
  if (p.shape() != q.shape()) {
    throw std::invalid_argument("kl_divergence: shape mismatch " +
                                shape_str(p.shape()) + " vs " +
                                shape_str(q.shape()));
  }
  int64_t n = p.dim(0);
  double total = 0.0;
  for (int64_t i = 0; i < p.size(); ++i) {
    double pi = std::max(p.data()[i], kLogFloor);
    double qi = std::max(q.data()[i], kLogFloor);
    total += p.data()[i] * (std::log(pi) - std::log(qi));
  }
  total /= static_cast<double>(n);
  Tensor out = Tensor::scalar(total, wants_grad(p, q));
  if (tape && out.requires_grad()) {
    tape->push([p, q, out, n](GradStore& gs) {
      double go = gs.adj(out)[0] / static_cast<double>(n);
      if (p.requires_grad()) {
        auto& gp = gs.adj(p);
        for (int64_t i = 0; i < p.size(); ++i) {
          double pi = std::max(p.data()[i], kLogFloor);
          double qi = std::max(q.data()[i], kLogFloor);
          double d = std::log(pi) - std::log(qi);
          if (p.data()[i] > kLogFloor) d += 1.0;
          gp[i] += go * d;
        }
      }
      if (q.requires_grad()) {
        auto& gq = gs.adj(q);
        for (int64_t i = 0; i < q.size(); ++i) {
          if (q.data()[i] > kLogFloor)
            gq[i] -= go * p.data()[i] / q.data()[i];
        }
      }
    });
  }
  return out;
}

Tensor transpose(Tape* tape, const Tensor& x) {
  check_rank2(x, "transpose");
  int64_t m = x.dim(0), n = x.dim(1);
  Tensor out({n, m}, wants_grad(x));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.data()[j * m + i] = x.data()[i * n + j];
  if (tape && out.requires_grad()) {
    tape->push([x, out, m, n](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          gx[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

Tensor slice_cols(Tape* tape, const Tensor& x, int64_t start, int64_t count) {
  check_rank2(x, "slice_cols");
  int64_t m = x.dim(0), n = x.dim(1);
  if (start < 0 || count <= 0 || start + count > n) {
    throw std::out_of_range("slice_cols: [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " +
                            shape_str(x.shape()));
  }
  Tensor out({m, count}, wants_grad(x));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < count; ++j)
      out.data()[i * count + j] = x.data()[i * n + start + j];
  if (tape && out.requires_grad()) {
    tape->push([x, out, m, n, start, count](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < count; ++j)
          gx[i * n + start + j] += go[i * count + j];
    });
  }
  return out;
}

Tensor slice_rows(Tape* tape, const Tensor& x, int64_t start, int64_t count) {
  check_rank2(x, "slice_rows");
  int64_t m = x.dim(0), n = x.dim(1);
  if (start < 0 || count <= 0 || start + count > m) {
    throw std::out_of_range("slice_rows: [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " +
                            shape_str(x.shape()));
  }
  Tensor out({count, n}, wants_grad(x));
  std::copy_n(x.data().begin() + start * n, count * n, out.data().begin());
  if (tape && out.requires_grad()) {
    tape->push([x, out, n, start, count](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(x);
      for (int64_t i = 0; i < count * n; ++i) gx[start * n + i] += go[i];
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  int64_t m = parts[0].dim(0);
  int64_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.dim(0) != m) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out({m, total}, rg);
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t w = p.dim(1);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j)
        out.data()[i * total + off + j] = p.data()[i * w + j];
    off += w;
  }
  if (tape && rg) {
    tape->push([parts, out, m, total](GradStore& gs) {
      const auto& go = gs.adj(out);
      int64_t off = 0;
      for (const auto& p : parts) {
        int64_t w = p.dim(1);
        if (p.requires_grad()) {
          auto& gp = gs.adj(p);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              gp[i * w + j] += go[i * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor causal_mask(Tape* tape, const Tensor& scores) {
  check_rank2(scores, "causal_mask");
  if (scores.dim(0) != scores.dim(1)) {
    throw std::invalid_argument("causal_mask: expected square scores, got " +
                                shape_str(scores.shape()));
  }
  int64_t l = scores.dim(0);
  Tensor out(scores.shape(), wants_grad(scores));
  for (int64_t i = 0; i < l; ++i)
    for (int64_t j = 0; j < l; ++j)
      out.data()[i * l + j] = (j > i) ? kMaskValue : scores.data()[i * l + j];
  if (tape && out.requires_grad()) {
    tape->push([scores, out, l](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gx = gs.adj(scores);
      for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j <= i; ++j) gx[i * l + j] += go[i * l + j];
    });
  }
  return out;
}

Tensor embedding_rows(Tape* tape, const Tensor& table,
                      const std::vector<int>& indices) {
  check_rank2(table, "embedding_rows");
  int64_t v = table.dim(0), d = table.dim(1);
  int64_t l = static_cast<int64_t>(indices.size());
  for (int idx : indices) {
    if (idx < 0 || idx >= v) {
      throw std::out_of_range("embedding_rows: index " + std::to_string(idx) +
                              " outside [0, " + std::to_string(v) + ")");
    }
  }
  Tensor out({l, d}, wants_grad(table));
  for (int64_t i = 0; i < l; ++i)
    std::copy_n(table.data().begin() + indices[static_cast<size_t>(i)] * d, d,
                out.data().begin() + i * d);
  if (tape && out.requires_grad()) {
    tape->push([table, indices, out, d](GradStore& gs) {
      const auto& go = gs.adj(out);
      auto& gt = gs.adj(table);
      for (size_t i = 0; i < indices.size(); ++i) {
        for (int64_t j = 0; j < d; ++j)
          gt[static_cast<int64_t>(indices[i]) * d + j] +=
              go[static_cast<int64_t>(i) * d + j];
      }
    });
  }
  return out;
}

}  // namespace acmp::ops
