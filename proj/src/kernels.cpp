#include "rau/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rau::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = std::ptrdiff_t;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < m; ++r) s += a[r * k + p] * b[r * n + j];
      c[p * n + j] = accumulate ? c[p * n + j] + s : s;
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l) s += a[i * n + l] * b[j * n + l];
      c[i * k + j] = accumulate ? c[i * k + j] + s : s;
    }
  }
}

void softmax_cols(const double* x, double* y, std::size_t r, std::size_t c) {
  for (std::size_t j = 0; j < c; ++j) {
    double mx = x[j];
    for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, x[i * c + j]);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      y[i * c + j] = std::exp(x[i * c + j] - mx);
      total += y[i * c + j];
    }
    for (std::size_t i = 0; i < r; ++i) y[i * c + j] /= total;
  }
}

void block_weighted_sum(const double* g, const double* w, double* y, std::size_t s, std::size_t l,
                        std::size_t b) {
  const std::size_t width = l * b;
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < l; ++t) acc += g[i * width + j * l + t] * w[t * b + j];
      y[i * b + j] = acc;
    }
  }
}

}  // namespace serial

namespace parallel {

namespace {

// Four output rows share each load of the right-hand row. Every output
// element is still accumulated over the inner index in increasing order.
void axpy_rows(const double* __restrict a, std::size_t a_row_stride, std::size_t a_col_stride,
               const double* __restrict b, double* __restrict c, std::size_t rows, std::size_t depth,
               std::size_t n, bool accumulate) {
  // Row i of the left operand, element l, lives at a[i * a_row_stride + l * a_col_stride].
  const Index blocks = static_cast<Index>((rows + 3) / 4);
#pragma omp parallel for schedule(static) if (rows * depth * n > kParallelWork)
  for (Index blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
    const std::size_t count = std::min<std::size_t>(4, rows - i0);
    double* __restrict c0 = c + i0 * n;
    if (!accumulate) std::fill(c0, c0 + count * n, 0.0);
    if (count == 4) {
      double* __restrict c1 = c0 + n;
      double* __restrict c2 = c1 + n;
      double* __restrict c3 = c2 + n;
      for (std::size_t l = 0; l < depth; ++l) {
        const double* ap = a + i0 * a_row_stride + l * a_col_stride;
        const double x0 = ap[0], x1 = ap[a_row_stride], x2 = ap[2 * a_row_stride], x3 = ap[3 * a_row_stride];
        const double* __restrict bl = b + l * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) {
          const double bv = bl[j];
          c0[j] += x0 * bv;
          c1[j] += x1 * bv;
          c2[j] += x2 * bv;
          c3[j] += x3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < count; ++r) {
        double* __restrict ci = c0 + r * n;
        for (std::size_t l = 0; l < depth; ++l) {
          const double x = a[(i0 + r) * a_row_stride + l * a_col_stride];
          const double* __restrict bl = b + l * n;
#pragma omp simd
          for (std::size_t j = 0; j < n; ++j) ci[j] += x * bl[j];
        }
      }
    }
  }
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  axpy_rows(a, k, 1, b, c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  axpy_rows(a, 1, k, b, c, k, m, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  // A * B^T == A * (B^T) with B^T materialized, which lets the blocked kernel run.
  std::vector<double> bt(n * k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t l = 0; l < n; ++l) bt[l * k + j] = b[j * n + l];
  }
  axpy_rows(a, n, 1, bt.data(), c, m, n, k, accumulate);
}

void softmax_cols(const double* x, double* y, std::size_t r, std::size_t c) {
  const Index cols = static_cast<Index>(c);
#pragma omp parallel for schedule(static) if (r * c > kParallelWork)
  for (Index jj = 0; jj < cols; ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    double mx = x[j];
    for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, x[i * c + j]);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      y[i * c + j] = std::exp(x[i * c + j] - mx);
      total += y[i * c + j];
    }
    for (std::size_t i = 0; i < r; ++i) y[i * c + j] /= total;
  }
}

void block_weighted_sum(const double* g, const double* w, double* y, std::size_t s, std::size_t l,
                        std::size_t b) {
  const std::size_t width = l * b;
  const Index rows = static_cast<Index>(s);
#pragma omp parallel for schedule(static) if (s * width > kParallelWork)
  for (Index ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const double* gi = g + i * width;
    double* yi = y + i * b;
    for (std::size_t j = 0; j < b; ++j) {
      const double* block = gi + j * l;
      double acc = 0.0;
      for (std::size_t t = 0; t < l; ++t) acc += block[t] * w[t * b + j];
      yi[j] = acc;
    }
  }
}

}  // namespace parallel

}  // namespace rau::kernels
