#include "wtfd/rng.hpp"

#include <cmath>

#include "wtfd/errors.hpp"

namespace wtfd {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::stream(std::uint64_t seed, std::string_view name, std::uint64_t a,
                std::uint64_t b) {
  std::uint64_t x = seed;
  std::uint64_t h = splitmix64(x) ^ fnv1a64(name);
  h = splitmix64(h) ^ (a * 0x9e3779b97f4a7c15ULL);
  h = splitmix64(h) ^ (b * 0xc2b2ae3d27d4eb4fULL);
  return Rng(splitmix64(h));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 in (0, 1] so log() is finite.
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal() {
  for (int i = 0; i < 64; ++i) {
    double z = normal();
    if (z >= -2.0 && z <= 2.0) return z;
  }
  return 0.0;
}

std::uint32_t Rng::below(std::uint32_t n) {
  if (n == 0) throw ContractError("Rng::below: n must be > 0");
  // Lemire-style rejection for an unbiased bounded draw.
  std::uint64_t threshold = (~std::uint64_t{0} - n + 1) % n;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::uint32_t>(r % n);
  }
}

}  // namespace wtfd
