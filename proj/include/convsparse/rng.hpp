// Deterministic random primitives. Distributions are mapped from raw
// mt19937_64 output with explicit arithmetic (no std::*_distribution), so the
// draw streams are identical across platforms and standard libraries.
// Stream id: "mt19937_64/boxmuller-v1".
#ifndef CONVSPARSE_RNG_HPP
#define CONVSPARSE_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

namespace convsparse {

inline constexpr const char* kRngStreamId = "mt19937_64/boxmuller-v1";

/// Seed-split for parallel workers: child streams are splitmix64 hashes of
/// (base, stream index), so disjoint indices give independent streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Standard normal via Box-Muller; exactly two uniforms per draw.
  double normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  /// Uniform integer in [0, bound), unbiased by rejection.
  std::uint64_t uniform_index(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_index needs bound > 0");
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t u = next_u64();
    while (u >= limit) u = next_u64();
    return u % bound;
  }

  /// `count` distinct indices from [0, population), uniformly, returned in
  /// ascending order (Floyd's algorithm).
  std::vector<std::int64_t> sample_without_replacement(std::int64_t population,
                                                       std::int64_t count) {
    if (count < 0 || count > population)
      throw std::invalid_argument("sample count out of range");
    std::set<std::int64_t> chosen;
    for (std::int64_t j = population - count; j < population; ++j) {
      const auto t = static_cast<std::int64_t>(
          uniform_index(static_cast<std::uint64_t>(j) + 1));
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    return std::vector<std::int64_t>(chosen.begin(), chosen.end());
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace convsparse

#endif  // CONVSPARSE_RNG_HPP
