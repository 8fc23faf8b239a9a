#pragma once

#include <cstddef>

namespace bunet {

/// Sets the worker count for OpenMP loops and the BLAS backend.
/// 1 selects single-threaded mode, which is bitwise reproducible.
void set_num_threads(int n);
int num_threads();

namespace blas {

/// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

}  // namespace blas
}  // namespace bunet
