#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mvgmn {

std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a seed with a stream index so that derived generators are
/// independent of each other and of the call order that created them.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// xoshiro256++ seeded by four successive splitmix64 outputs. Every random
/// quantity in the library comes from this generator through the helpers
/// below, so results do not depend on the standard library's distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace mvgmn
