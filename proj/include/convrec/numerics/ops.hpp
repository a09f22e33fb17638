#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "convrec/error.hpp"
#include "convrec/numerics/kernels.hpp"
#include "convrec/numerics/variable.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and,
// when recording, attaches a hand-written backward pass.
namespace convrec::numerics {

namespace detail {

inline void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_string(x.shape()));
  }
}

inline void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.ptr();
  const double* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

// x[n x p] * w[p x q]
inline Var matmul(const Var& a, const Var& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t n = a.value().rows(), p = a.value().cols(), q = b.value().cols();
  if (b.value().rows() != p) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  Tensor out({n, q});
  kernels::gemm_nn(n, q, p, a.value().ptr(), b.value().ptr(), out.ptr(), false);
  return make_result(std::move(out), {a.node(), b.node()}, [n, p, q](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad)
      kernels::gemm_nt(n, p, q, self.grad.ptr(), bn.value.ptr(), an.grad.ptr(), true);
    if (bn.requires_grad)
      kernels::gemm_tn(p, q, n, an.value.ptr(), self.grad.ptr(), bn.grad.ptr(), true);
  });
}

// out[i,j] = sum_k x[i,k] w[k,j] + b[j]
inline Var linear(const Var& x, const Var& w, const Var& b) {
  detail::require_rank(x, 2, "linear");
  detail::require_rank(w, 2, "linear");
  const std::size_t n = x.value().rows(), p = x.value().cols(), q = w.value().cols();
  if (w.value().rows() != p || b.value().size() != q) {
    throw DimensionError("linear: shape mismatch between input " + shape_string(x.shape()) +
                         ", weight " + shape_string(w.shape()) + " and bias " +
                         shape_string(b.shape()));
  }
  Tensor out({n, q});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(b.value().ptr(), q, out.ptr() + i * q);
  kernels::gemm_nn(n, q, p, x.value().ptr(), w.value().ptr(), out.ptr(), true);
  return make_result(std::move(out), {x.node(), w.node(), b.node()}, [n, p, q](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    const double* g = self.grad.ptr();
    if (xn.requires_grad) kernels::gemm_nt(n, p, q, g, wn.value.ptr(), xn.grad.ptr(), true);
    if (wn.requires_grad) kernels::gemm_tn(p, q, n, xn.value.ptr(), g, wn.grad.ptr(), true);
    if (bn.requires_grad) {
      double* db = bn.grad.ptr();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) db[j] += g[i * q + j];
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out = a.value();
  detail::add_into(out, b.value());
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) detail::add_into(p->grad, self.grad);
  });
}

inline Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_result(std::move(out), {x.node()}, [factor](Node& self) {
    Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += factor * self.grad[i];
  });
}

// alpha * x with a learnable scalar alpha (shape [1]).
inline Var scale_by(const Var& x, const Var& alpha) {
  if (alpha.value().size() != 1) {
    throw DimensionError("scale_by: scalar expected, got " + shape_string(alpha.shape()));
  }
  const double a = alpha.value()[0];
  Tensor out = x.value();
  for (auto& v : out.data()) v *= a;
  return make_result(std::move(out), {x.node(), alpha.node()}, [](Node& self) {
    Node& xn = *self.parents[0];
    Node& an = *self.parents[1];
    const double a = an.value[0];
    if (xn.requires_grad)
      for (std::size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += a * self.grad[i];
    if (an.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn.value[i];
      an.grad[0] += acc;
    }
  });
}

inline Var transpose(const Var& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t r = x.value().rows(), c = x.value().cols();
  Tensor out({c, r});
  kernels::transpose(r, c, x.value().ptr(), out.ptr());
  return make_result(std::move(out), {x.node()}, [r, c](Node& self) {
    Node& xn = *self.parents[0];
    double* dx = xn.grad.ptr();
    const double* g = self.grad.ptr();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    detail::add_into(self.parents[0]->grad, self.grad);
  });
}

// Row-wise concatenation [a | b].
inline Var concat_cols(const Var& a, const Var& b) {
  detail::require_rank(a, 2, "concat_cols");
  detail::require_rank(b, 2, "concat_cols");
  const std::size_t n = a.value().rows(), p = a.value().cols(), q = b.value().cols();
  if (b.value().rows() != n) {
    throw DimensionError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().ptr() + i * p, p, out.ptr() + i * (p + q));
    std::copy_n(b.value().ptr() + i * q, q, out.ptr() + i * (p + q) + p);
  }
  return make_result(std::move(out), {a.node(), b.node()}, [n, p, q](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const double* g = self.grad.ptr();
    for (std::size_t i = 0; i < n; ++i) {
      if (an.requires_grad)
        for (std::size_t j = 0; j < p; ++j) an.grad[i * p + j] += g[i * (p + q) + j];
      if (bn.requires_grad)
        for (std::size_t j = 0; j < q; ++j) bn.grad[i * q + j] += g[i * (p + q) + p + j];
    }
  });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  detail::require_rank(x, 2, "slice_cols");
  const std::size_t n = x.value().rows(), c = x.value().cols();
  if (begin + count > c) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(x.shape()));
  }
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.value().ptr() + i * c + begin, count, out.ptr() + i * count);
  return make_result(std::move(out), {x.node()}, [n, c, begin, count](Node& self) {
    double* dx = self.parents[0]->grad.ptr();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * c + begin + j] += self.grad[i * count + j];
  });
}

// Exact GELU, x * Phi(x).
inline double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

inline Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = gelu_value(v);
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += self.grad[i] * gelu_derivative(xn.value[i]);
  });
}

// Per-row normalisation over the last dimension, then gamma * xhat + beta.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double epsilon) {
  detail::require_rank(x, 2, "layer_norm");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (d == 0 || gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " with gamma " +
                         shape_string(gamma.shape()) + " and beta " + shape_string(beta.shape()));
  }
  Tensor out({n, d});
  Tensor xhat({n, d});
  Tensor inv_std({n});
  const double* xv = x.value().ptr();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv[i * d + j] - mean) * inv;
      xhat(i, j) = h;
      out(i, j) = gamma.value()[j] * h + beta.value()[j];
    }
  }
  return make_result(std::move(out), {x.node(), gamma.node(), beta.node()},
                     [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& xn = *self.parents[0];
                       Node& gn = *self.parents[1];
                       Node& bn = *self.parents[2];
                       const double* g = self.grad.ptr();
                       for (std::size_t i = 0; i < n; ++i) {
                         double sum_dh = 0.0, sum_dh_h = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gij = g[i * d + j];
                           if (gn.requires_grad) gn.grad[j] += gij * xhat(i, j);
                           if (bn.requires_grad) bn.grad[j] += gij;
                           const double dh = gij * gn.value[j];
                           sum_dh += dh;
                           sum_dh_h += dh * xhat(i, j);
                         }
                         if (!xn.requires_grad) continue;
                         const double scale = inv_std[i] / static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dh = g[i * d + j] * gn.value[j];
                           xn.grad[i * d + j] +=
                               scale * (static_cast<double>(d) * dh - sum_dh - xhat(i, j) * sum_dh_h);
                         }
                       }
                     });
}

struct Padding {
  std::size_t left = 0;
  std::size_t right = 0;
};

// Cross-correlation of x[C_in x L] with kernels[C_out x C_in x K] over the
// zero-padded sequence; output [C_out x L_out], L_out = (L + pad - K)/S + 1.
inline Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t stride, Padding pad) {
  detail::require_rank(x, 2, "conv1d");
  detail::require_rank(kernels, 3, "conv1d");
  const std::size_t cin = x.value().rows(), len = x.value().cols();
  const std::size_t cout = kernels.value().dim(0), k = kernels.value().dim(2);
  if (kernels.value().dim(1) != cin || bias.value().size() != cout) {
    throw DimensionError("conv1d: input " + shape_string(x.shape()) + " incompatible with kernels " +
                         shape_string(kernels.shape()) + " / bias " + shape_string(bias.shape()));
  }
  if (k == 0 || stride == 0) throw ConfigError("conv1d: kernel size and stride must be positive");
  const std::size_t padded = len + pad.left + pad.right;
  if (k > padded) {
    throw ConfigError("conv1d: kernel size " + std::to_string(k) + " exceeds padded length " +
                      std::to_string(padded));
  }
  const std::size_t lout = (padded - k) / stride + 1;
  const std::size_t patch = cin * k;

  // im2col: cols[(ci*K + j) x t] = x[ci, t*S + j - left]
  Tensor cols({patch, lout});
  const double* xv = x.value().ptr();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t j = 0; j < k; ++j) {
      double* crow = cols.ptr() + (ci * k + j) * lout;
      for (std::size_t t = 0; t < lout; ++t) {
        const std::size_t pos = t * stride + j;
        crow[t] = (pos >= pad.left && pos - pad.left < len) ? xv[ci * len + pos - pad.left] : 0.0;
      }
    }
  }
  Tensor out({cout, lout});
  for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.ptr() + co * lout, lout, bias.value()[co]);
  kernels::gemm_nn(cout, lout, patch, kernels.value().ptr(), cols.ptr(), out.ptr(), true);

  return make_result(
      std::move(out), {x.node(), kernels.node(), bias.node()},
      [cin, len, cout, k, stride, pad, lout, patch, cols = std::move(cols)](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        const double* g = self.grad.ptr();
        if (wn.requires_grad) kernels::gemm_nt(cout, patch, lout, g, cols.ptr(), wn.grad.ptr(), true);
        if (bn.requires_grad) {
          for (std::size_t co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t t = 0; t < lout; ++t) acc += g[co * lout + t];
            bn.grad[co] += acc;
          }
        }
        if (xn.requires_grad) {
          Tensor dcols({patch, lout});
          kernels::gemm_tn(patch, lout, cout, wn.value.ptr(), g, dcols.ptr(), false);
          double* dx = xn.grad.ptr();
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t j = 0; j < k; ++j) {
              const double* drow = dcols.ptr() + (ci * k + j) * lout;
              for (std::size_t t = 0; t < lout; ++t) {
                const std::size_t pos = t * stride + j;
                if (pos >= pad.left && pos - pad.left < len) dx[ci * len + pos - pad.left] += drow[t];
              }
            }
          }
        }
      });
}

// Half-open window [begin, end) over real (unpadded) positions.
struct PoolWindow {
  std::size_t begin;
  std::size_t end;
};

// Mean of x[d x L] over each window; a window with no real element yields 0.
inline Var pool_windows(const Var& x, std::vector<PoolWindow> windows) {
  detail::require_rank(x, 2, "avg_pool1d");
  const std::size_t d = x.value().rows(), len = x.value().cols(), w = windows.size();
  for (const auto& win : windows) {
    if (win.begin > win.end || win.end > len) throw DimensionError("avg_pool1d: window outside input");
  }
  Tensor out({d, w});
  const double* xv = x.value().ptr();
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t t = 0; t < w; ++t) {
      const auto [b, e] = windows[t];
      if (b == e) continue;
      double acc = 0.0;
      for (std::size_t i = b; i < e; ++i) acc += xv[c * len + i];
      out(c, t) = acc / static_cast<double>(e - b);
    }
  }
  return make_result(std::move(out), {x.node()}, [d, len, w, windows = std::move(windows)](Node& self) {
    double* dx = self.parents[0]->grad.ptr();
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t t = 0; t < w; ++t) {
        const auto [b, e] = windows[t];
        if (b == e) continue;
        const double share = self.grad[c * w + t] / static_cast<double>(e - b);
        for (std::size_t i = b; i < e; ++i) dx[c * len + i] += share;
      }
    }
  });
}

// Average pooling over x[d x L]; padded positions are excluded from the
// divisor.
inline Var avg_pool1d(const Var& x, std::size_t window, std::size_t stride, Padding pad) {
  detail::require_rank(x, 2, "avg_pool1d");
  if (window == 0 || stride == 0) throw ConfigError("avg_pool1d: window and stride must be positive");
  const std::size_t len = x.value().cols();
  const std::size_t padded = len + pad.left + pad.right;
  if (window > padded) {
    throw ConfigError("avg_pool1d: window " + std::to_string(window) + " exceeds padded length " +
                      std::to_string(padded));
  }
  const std::size_t lout = (padded - window) / stride + 1;
  std::vector<PoolWindow> windows;
  windows.reserve(lout);
  for (std::size_t t = 0; t < lout; ++t) {
    const std::size_t start = t * stride;
    const std::size_t stop = start + window;
    const std::size_t b = std::min(len, start > pad.left ? start - pad.left : 0);
    const std::size_t e = std::min(len, stop > pad.left ? stop - pad.left : 0);
    windows.push_back({b, std::max(b, e)});
  }
  return pool_windows(x, std::move(windows));
}

// Pools x[d x L] to exactly out_len columns with windows
// [floor(i*L/out), ceil((i+1)*L/out)).
inline Var adaptive_avg_pool1d(const Var& x, std::size_t out_len) {
  detail::require_rank(x, 2, "adaptive_avg_pool1d");
  const std::size_t len = x.value().cols();
  if (out_len == 0 || out_len > len) {
    throw ConfigError("adaptive_avg_pool1d: cannot pool length " + std::to_string(len) + " to " +
                      std::to_string(out_len));
  }
  std::vector<PoolWindow> windows;
  windows.reserve(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    windows.push_back({i * len / out_len, ((i + 1) * len + out_len - 1) / out_len});
  }
  return pool_windows(x, std::move(windows));
}

// Inverted dropout. Identity when not training or rate == 0.
inline Var dropout(const Var& x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.shape());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? keep_scale : 0.0;
    out[i] *= mask[i];
  }
  return make_result(std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
    Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += self.grad[i] * mask[i];
  });
}

// Column means: x[n x d] -> [1 x d].
inline Var mean_rows(const Var& x) {
  detail::require_rank(x, 2, "mean_rows");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (n == 0) throw DimensionError("mean_rows: empty input");
  Tensor out({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.value()(i, j);
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
  return make_result(std::move(out), {x.node()}, [n, d](Node& self) {
    double* dx = self.parents[0]->grad.ptr();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += self.grad[j] * inv;
  });
}

// Row lookup: out[i] = table[indices[i]]. Backward scatters into the rows
// actually referenced.
inline Var gather_rows(const Var& table, std::vector<std::size_t> indices) {
  detail::require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.value().rows(), d = table.value().cols();
  Tensor out({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw std::out_of_range("gather_rows: row " + std::to_string(indices[i]) +
                              " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.value().ptr() + indices[i] * d, d, out.ptr() + i * d);
  }
  return make_result(std::move(out), {table.node()}, [d, indices = std::move(indices)](Node& self) {
    double* dt = self.parents[0]->grad.ptr();
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dt[indices[i] * d + j] += self.grad[i * d + j];
  });
}

// factor * a[n x p] * b[m x p]^T -> [n x m]
inline Var matmul_nt(const Var& a, const Var& b, double factor = 1.0) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.value().rows(), p = a.value().cols(), m = b.value().rows();
  if (b.value().cols() != p) {
    throw DimensionError("matmul_nt: width mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out({n, m});
  kernels::gemm_nt(n, m, p, a.value().ptr(), b.value().ptr(), out.ptr(), false);
  if (factor != 1.0)
    for (auto& v : out.data()) v *= factor;
  return make_result(std::move(out), {a.node(), b.node()}, [n, p, m, factor](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    Tensor scaled;
    const double* g = self.grad.ptr();
    if (factor != 1.0) {
      scaled = self.grad;
      for (auto& v : scaled.data()) v *= factor;
      g = scaled.ptr();
    }
    if (an.requires_grad) kernels::gemm_nn(n, p, m, g, bn.value.ptr(), an.grad.ptr(), true);
    if (bn.requires_grad) kernels::gemm_tn(m, p, n, g, an.value.ptr(), bn.grad.ptr(), true);
  });
}

inline Var softmax_rows(const Var& x) {
  detail::require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  Tensor out = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    double* r = out.ptr() + i * d;
    const double mx = *std::max_element(r, r + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < d; ++j) r[j] *= inv;
  }
  return make_result(std::move(out), {x.node()}, [n, d](Node& self) {
    Node& xn = *self.parents[0];
    const double* y = self.value.ptr();
    const double* g = self.grad.ptr();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * y[i * d + j];
      for (std::size_t j = 0; j < d; ++j) xn.grad[i * d + j] += y[i * d + j] * (g[i * d + j] - dot);
    }
  });
}

inline Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return make_result(Tensor({1}, {acc}), {x.node()}, [](Node& self) {
    Node& xn = *self.parents[0];
    for (auto& v : xn.grad.data()) v += self.grad[0];
  });
}

inline Var mean(const Var& x) {
  if (x.value().size() == 0) throw DimensionError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Binary cross-entropy over raw logits with the single positive at index 0:
// -[log s(y0) + sum_n log(1 - s(yn))] = softplus(-y0) + sum_n softplus(yn).
inline Var bce_with_logits(const Var& logits) {
  const std::size_t n = logits.value().size();
  if (n == 0) throw DimensionError("bce_with_logits: no logits");
  const double* y = logits.value().ptr();
  double loss = softplus(-y[0]);
  for (std::size_t i = 1; i < n; ++i) loss += softplus(y[i]);
  return make_result(Tensor({1}, {loss}), {logits.node()}, [n](Node& self) {
    Node& ln = *self.parents[0];
    const double g = self.grad[0];
    ln.grad[0] += g * (sigmoid(ln.value[0]) - 1.0);
    for (std::size_t i = 1; i < n; ++i) ln.grad[i] += g * sigmoid(ln.value[i]);
  });
}

}  // namespace convrec::numerics
