// Compiled with -mavx2 -mfma. Nothing in here may run before dispatch has
// confirmed the CPU supports both extensions.
#include "pdet/kernels/kernels.hpp"

#if defined(PDET_HAVE_AVX2)
#include <immintrin.h>

#include <cmath>

namespace pdet::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// 4 x 8 register block: eight accumulators, one broadcast per row of A.
inline void block_4x8(std::size_t k, const double* a, std::size_t a_rs,
                      std::size_t a_cs, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    const double* ap = a + p * a_cs;
    __m256d av = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(ap + a_rs);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(ap + 2 * a_rs);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(ap + 3 * a_rs);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  auto store = [&](double* row, __m256d lo, __m256d hi) {
    if (accumulate) {
      lo = _mm256_add_pd(lo, _mm256_loadu_pd(row));
      hi = _mm256_add_pd(hi, _mm256_loadu_pd(row + 4));
    }
    _mm256_storeu_pd(row, lo);
    _mm256_storeu_pd(row + 4, hi);
  };
  store(c, c00, c01);
  store(c + ldc, c10, c11);
  store(c + 2 * ldc, c20, c21);
  store(c + 3 * ldc, c30, c31);
}

// One row of C against a 4-wide column strip.
inline void row_strip4(std::size_t k, const double* a, std::size_t a_cs,
                       const double* b, std::size_t ldb, double* c,
                       bool accumulate) {
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p * a_cs),
                          _mm256_loadu_pd(b + p * ldb), acc);
  }
  if (accumulate) acc = _mm256_add_pd(acc, _mm256_loadu_pd(c));
  _mm256_storeu_pd(c, acc);
}

inline void row_scalar(std::size_t k, const double* a, std::size_t a_cs,
                       const double* b, std::size_t ldb, double* c,
                       bool accumulate) {
  double acc = 0.0;
  for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p * a_cs], b[p * ldb], acc);
  *c = accumulate ? *c + acc : acc;
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t a_rs, std::size_t a_cs, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  const std::size_t m4 = m - m % 4;
  const std::size_t n8 = n - n % 8;
  for (std::size_t i = 0; i < m4; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      block_4x8(k, a + i * a_rs, a_rs, a_cs, b + j, ldb, c + i * ldc + j, ldc,
                accumulate);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j0 = i < m4 ? n8 : 0;
    std::size_t j = j0;
    for (; j + 4 <= n; j += 4) {
      row_strip4(k, a + i * a_rs, a_cs, b + j, ldb, c + i * ldc + j,
                 accumulate);
    }
    for (; j < n; ++j) {
      row_scalar(k, a + i * a_rs, a_cs, b + j, ldb, c + i * ldc + j,
                 accumulate);
    }
  }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                         _mm256_loadu_pd(y + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template <class Op, class ScalarOp>
inline void binary_loop(const double* x, const double* y, double* out,
                        std::size_t n, Op op, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     op(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = sop(x[i], y[i]);
}

void add_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary_loop(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_add_pd(a, b); },
              [](double a, double b) { return a + b; });
}

void sub_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary_loop(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_sub_pd(a, b); },
              [](double a, double b) { return a - b; });
}

void mul_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary_loop(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_mul_pd(a, b); },
              [](double a, double b) { return a * b; });
}

void scale_avx2(double alpha, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
    s1 = _mm256_add_pd(s1, _mm256_loadu_pd(x + i + 4));
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{"avx2",   gemm_avx2, dot_avx2,
                                 axpy_avx2, add_avx2, sub_avx2,
                                 mul_avx2, scale_avx2, sum_avx2};
  return &table;
}

}  // namespace pdet::kernels

#else

namespace pdet::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace pdet::kernels

#endif
