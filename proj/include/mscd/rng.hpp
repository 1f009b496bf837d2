#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mscd {

/// Seeded random source. The engine is std::mt19937_64, whose output sequence
/// is fixed by the C++ standard; all derived distributions (uniform, normal,
/// gamma, integer ranges) are implemented here rather than taken from
/// <random>, so a seed reproduces the same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for a (seed, stream) pair, mixed with splitmix64.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Box-Muller transform.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Gamma(shape, scale=1) by Marsaglia-Tsang.
  double gamma(double shape);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Uniform random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mscd
