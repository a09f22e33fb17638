#pragma once

#include <cstddef>

#include "convrec/numerics/memory.hpp"

// Plain-loop matrix kernels. Loop orders keep the innermost loop a unit-stride
// axpy so the compiler can vectorise it; no reassociation of sums is needed,
// which keeps results bit-reproducible.
namespace convrec::numerics::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                    const double* __restrict b, double* __restrict c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] (+)= A^T * B where A is stored k x m and B is k x n.
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                    const double* __restrict b, double* __restrict c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* __restrict brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* __restrict crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[cols x rows] = in[rows x cols]^T
inline void transpose(std::size_t rows, std::size_t cols, const double* __restrict in,
                      double* __restrict out) {
  constexpr std::size_t tile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += tile) {
    const std::size_t i1 = i0 + tile < rows ? i0 + tile : rows;
    for (std::size_t j0 = 0; j0 < cols; j0 += tile) {
      const std::size_t j1 = j0 + tile < cols ? j0 + tile : cols;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

// C[m x n] (+)= A[m x k] * B^T where B is stored n x k. B is transposed into
// tracked scratch first so the multiply runs in axpy order.
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c, bool accumulate) {
  Buffer bt(n * k);
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace convrec::numerics::kernels
