#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pstrp {

/// Seeded generator with platform-independent draws. The std distributions are
/// implementation-defined, so uniform/normal/bounded draws are derived here from
/// the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound), rejection-sampled (no modulo bias).
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniformly random permutation of 0..n-1 (Fisher-Yates).
  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes several values into one seed (splitmix64 finalizer chain), so derived
/// streams do not depend on iteration order.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

std::uint64_t hash_string(const std::string& s);

}  // namespace pstrp
