// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "pstrp/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace pstrp::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 16 <= n; k += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 4), _mm256_loadu_pd(b + k + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 8), _mm256_loadu_pd(b + k + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 12), _mm256_loadu_pd(b + k + 12), acc3);
  }
  for (; k + 4 <= n; k += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    _mm256_storeu_pd(y + k, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k)));
    _mm256_storeu_pd(y + k + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k + 4), _mm256_loadu_pd(y + k + 4)));
  }
  for (; k + 4 <= n; k += 4) {
    _mm256_storeu_pd(y + k, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k)));
  }
  for (; k < n; ++k) y[k] += alpha * x[k];
}

double canberra_avx2(const double* a, const double* b, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d va = _mm256_loadu_pd(a + k);
    const __m256d vb = _mm256_loadu_pd(b + k);
    const __m256d num = _mm256_andnot_pd(sign, _mm256_sub_pd(va, vb));
    const __m256d den =
        _mm256_add_pd(_mm256_andnot_pd(sign, va), _mm256_andnot_pd(sign, vb));
    // 0/0 lanes: divide by 1 and mask to zero.
    const __m256d nonzero = _mm256_cmp_pd(den, zero, _CMP_GT_OQ);
    const __m256d safe = _mm256_blendv_pd(_mm256_set1_pd(1.0), den, nonzero);
    acc = _mm256_add_pd(acc, _mm256_and_pd(nonzero, _mm256_div_pd(num, safe)));
  }
  double total = hsum(acc);
  for (; k < n; ++k) {
    const double den = std::fabs(a[k]) + std::fabs(b[k]);
    if (den > 0.0) total += std::fabs(a[k] - b[k]) / den;
  }
  return total;
}

}  // namespace

const Kernels* avx2_kernels() {
  static const Kernels table{Isa::kAvx2, &dot_avx2, &axpy_avx2, &canberra_avx2};
  return &table;
}

}  // namespace pstrp::simd

#else

namespace pstrp::simd {
const Kernels* avx2_kernels() { return nullptr; }
}  // namespace pstrp::simd

#endif
