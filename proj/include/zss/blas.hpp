#pragma once

#include <cblas.h>

#include "zss/common.hpp"

extern "C" void openblas_set_num_threads(int);

namespace zss {

// We drive parallelism from our own pool; BLAS itself stays single-threaded
// so results are a function of our thread count alone.
inline void pin_blas_threads() {
  static bool done = false;
  if (!done) {
    openblas_set_num_threads(1);
    done = true;
  }
}

/// C = alpha * op(A) * op(B) + beta * C, row-major.
/// op(A) is (m, k), op(B) is (k, n), C is (m, n).
inline void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, float alpha,
                 const float* a, Index lda, const float* b, Index ldb, float beta, float* c,
                 Index ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, double alpha,
                 const double* a, Index lda, const double* b, Index ldb, double beta, double* c,
                 Index ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

}  // namespace zss
