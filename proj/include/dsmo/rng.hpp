#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace dsmo {

// Counter-based random streams. Every oracle query gets its own stream whose
// key is derived from (run seed, agent, purpose, level, sample index, round).
// Streams never share state, so agents can be updated on any number of
// threads with bit-identical results, and adding agents does not perturb the
// streams of existing ones.

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Stream purposes; part of the documented key-derivation scheme.
enum class RngPurpose : std::uint64_t {
  ProblemData = 1,   // problem construction (data, matrices, environment)
  OuterDraw = 2,     // f-oracle draw (both partials unless split)
  OuterDraw2 = 3,    // second f draw when two independent draws are requested
  InnerGrad = 4,     // per-level gradient draw of g_m
  InnerCross = 5,    // per-level cross-Hessian draw of g_m
  InnerHessian = 6,  // per-level own-Hessian draws (one per Neumann slot)
  Baseline = 7,      // inner loops of DBSA / DSGD
  TestPoints = 8,    // random evaluation points in checks
};

/// Derives a stream key by folding path components through splitmix64.
inline std::uint64_t derive_key(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = seed ^ 0xD6E8FEB86659FD93ULL;
  for (std::uint64_t part : path) {
    h ^= part + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    (void)detail::splitmix64(h);
  }
  return h;
}

/// Small deterministic PRNG (splitmix64 core) with the distributions the
/// simulator needs. Not suitable for cryptography.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  std::uint64_t u64() { return detail::splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in {0, ..., n-1}; n must be positive.
  long uniform_int(long n) {
    // Rejection-free modulo is biased for huge n; n here is small (data
    // indices, states), so 64-bit modulo bias is negligible (< 2^-40).
    return static_cast<long>(u64() % static_cast<std::uint64_t>(n));
  }

  /// Standard normal via Box-Muller; caches the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsmo
