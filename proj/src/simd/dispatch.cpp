#include <atomic>
#include <cstdlib>
#include <string>

#include "pstrp/simd/kernels.hpp"

namespace pstrp::simd {
namespace {

const Kernels* table_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &scalar_kernels();
    case Isa::kAvx2:
      return avx2_kernels();
    case Isa::kNeon:
      return neon_kernels();
  }
  return nullptr;
}

const Kernels* detect() {
  if (const char* env = std::getenv("PSTRP_SIMD")) {
    const std::string want(env);
    Isa isa = Isa::kScalar;
    if (want == "avx2") isa = Isa::kAvx2;
    if (want == "neon") isa = Isa::kNeon;
    return cpu_supports(isa) ? table_for(isa) : &scalar_kernels();
  }
  if (cpu_supports(Isa::kAvx2)) return avx2_kernels();
  if (cpu_supports(Isa::kNeon)) return neon_kernels();
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() {
  static std::atomic<const Kernels*> current{detect()};
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
      return neon_kernels() != nullptr;
  }
  return false;
}

const Kernels& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  const Kernels* table = cpu_supports(isa) ? table_for(isa) : &scalar_kernels();
  slot().store(table, std::memory_order_relaxed);
}

}  // namespace pstrp::simd
