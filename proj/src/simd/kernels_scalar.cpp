#include <cmath>

#include "pstrp/simd/kernels.hpp"

namespace pstrp::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

double canberra_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double den = std::fabs(a[k]) + std::fabs(b[k]);
    if (den > 0.0) acc += std::fabs(a[k] - b[k]) / den;
  }
  return acc;
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{Isa::kScalar, &dot_scalar, &axpy_scalar, &canberra_scalar};
  return table;
}

}  // namespace pstrp::simd
