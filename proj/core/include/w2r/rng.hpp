#pragma once

#include <cstdint>
#include <random>

namespace w2r {

/// Seedable generator with a fixed, platform-independent output sequence.
///
/// The engine is `std::mt19937_64`, whose output is pinned by the standard.
/// Floating-point draws are derived here rather than through the
/// `std::*_distribution` templates, whose algorithms are implementation-defined.
///
/// Stream splitting: every library call that consumes randomness constructs its
/// own `Rng(seed, stream)`; the engine is seeded with
/// `splitmix64(seed ^ splitmix64(stream))`, so distinct (seed, stream) pairs give
/// decorrelated sequences and no generator state is shared between calls.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stream identifiers for the library's random consumers.
namespace stream {
inline constexpr std::uint64_t kGaussian = 1;
inline constexpr std::uint64_t kMixture = 2;
inline constexpr std::uint64_t kTwoPoint = 3;
inline constexpr std::uint64_t kConvexityProbe = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kBatches = 6;
}  // namespace stream

}  // namespace w2r
