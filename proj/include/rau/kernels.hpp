#pragma once

#include <cstddef>

// Dense inner loops used by the autodiff ops. Every kernel exists twice:
// `serial` is the plain reference kept for testing, `parallel` splits the
// outermost output loop across OpenMP threads. Each output element is
// produced by one thread in a fixed order, so results do not depend on the
// thread count; they agree with `serial` up to rounding.
//
// All matrices are row-major. `accumulate` selects C += ... over C = ...

namespace rau::kernels {

namespace serial {

/// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
/// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
/// C[m x k] (+)= A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);

/// Column-wise softmax of X[r x c] into Y, with max subtraction.
void softmax_cols(const double* x, double* y, std::size_t r, std::size_t c);

/// Blocked weighted sum: G is [s x (l*b)] holding b blocks of l columns,
/// W is [l x b]. Y[s x b] with Y[:, j] = G[:, j*l:(j+1)*l] * W[:, j].
void block_weighted_sum(const double* g, const double* w, double* y, std::size_t s, std::size_t l,
                        std::size_t b);

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
void softmax_cols(const double* x, double* y, std::size_t r, std::size_t c);
void block_weighted_sum(const double* g, const double* w, double* y, std::size_t s, std::size_t l,
                        std::size_t b);

}  // namespace parallel

/// Threads available to the parallel kernels (1 when built without OpenMP).
int max_threads();

}  // namespace rau::kernels
