#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace pstrp::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Function table for the data-parallel inner loops. Every ISA variant must
/// agree with the scalar reference to within rounding of the reduction order.
struct Kernels {
  Isa isa;
  /// sum_k a[k] * b[k]
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y[k] += alpha * x[k]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// sum_k |a[k] - b[k]| / (|a[k]| + |b[k]|), with 0/0 terms contributing 0
  double (*canberra)(const double* a, const double* b, std::size_t n);
};

const Kernels& scalar_kernels();
/// nullptr when the variant was not compiled for this target.
const Kernels* avx2_kernels();
const Kernels* neon_kernels();

bool cpu_supports(Isa isa);

/// Best supported variant. PSTRP_SIMD=scalar|avx2|neon in the environment pins
/// the choice (an unsupported request falls back to scalar).
const Kernels& active();

/// Pins the active table; used by equivalence tests and benchmarks.
void set_active(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double canberra(std::span<const double> a, std::span<const double> b) {
  return active().canberra(a.data(), b.data(), a.size());
}

}  // namespace pstrp::simd
