#include "pstrp/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace pstrp::simd {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + k), vld1q_f64(b + k));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + k + 2), vld1q_f64(b + k + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    vst1q_f64(y + k, vfmaq_f64(vld1q_f64(y + k), va, vld1q_f64(x + k)));
  }
  for (; k < n; ++k) y[k] += alpha * x[k];
}

double canberra_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const float64x2_t va = vld1q_f64(a + k);
    const float64x2_t vb = vld1q_f64(b + k);
    const float64x2_t num = vabsq_f64(vsubq_f64(va, vb));
    const float64x2_t den = vaddq_f64(vabsq_f64(va), vabsq_f64(vb));
    const uint64x2_t nonzero = vcgtq_f64(den, zero);
    const float64x2_t safe = vbslq_f64(nonzero, den, one);
    const float64x2_t q = vdivq_f64(num, safe);
    acc = vaddq_f64(acc, vbslq_f64(nonzero, q, zero));
  }
  double total = vaddvq_f64(acc);
  for (; k < n; ++k) {
    const double den = std::fabs(a[k]) + std::fabs(b[k]);
    if (den > 0.0) total += std::fabs(a[k] - b[k]) / den;
  }
  return total;
}

}  // namespace

const Kernels* neon_kernels() {
  static const Kernels table{Isa::kNeon, &dot_neon, &axpy_neon, &canberra_neon};
  return &table;
}

}  // namespace pstrp::simd

#else

namespace pstrp::simd {
const Kernels* neon_kernels() { return nullptr; }
}  // namespace pstrp::simd

#endif
