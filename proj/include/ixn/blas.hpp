// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_BLAS_HPP
#define IXN_BLAS_HPP

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace ixn {
namespace detail {

// Pin BLAS to one thread: kernels must be deterministic and the training
// loop is single-threaded by contract.
inline bool pin_blas_threads() {
    openblas_set_num_threads(1);
    return true;
}

inline const bool blas_pinned = pin_blas_threads();

// C[m x n] (+)= A[m x k] * B[k x n], all row-major.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
                 const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
                 int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
                 int64_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

} // namespace detail
} // namespace ixn

#endif // IXN_BLAS_HPP
