#pragma once

#include <cstdint>
#include <string_view>

namespace wtfd {

// Deterministic PRNG (xoshiro256**) with named sub-streams.
//
// Every random decision in the toolkit flows from one master seed through
// Rng::stream(seed, name, a, b), so components are independently
// reproducible: the augmentation stream for (epoch, sample) can be rebuilt
// without replaying the data-split stream. Output is identical across
// platforms; no std::<distribution> is used anywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derive an independent stream keyed by (seed, name, a, b).
  static Rng stream(std::uint64_t seed, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (second draw cached).
  double normal();
  // Normal truncated to [-2, 2] sigma by resampling.
  double truncated_normal();
  // Uniform integer in [0, n); n must be > 0.
  std::uint32_t below(std::uint32_t n);

  // Fisher-Yates shuffle.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = below(static_cast<std::uint32_t>(i));
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// FNV-1a 64-bit hash; also used for content hashes in the preprocess cache.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace wtfd
