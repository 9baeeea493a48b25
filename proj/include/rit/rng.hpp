#pragma once

#include <cstdint>

namespace rit {

inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a root seed. Every episode,
// command, and sub-system draws from its own generator, so results do not
// depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t s = root ^ (0x9e3779b97f4a7c15ull * (stream + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

// xoshiro256** with splitmix64 seeding. Hand-rolled so that streams are
// byte-reproducible across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next_u64() {
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

  // [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform in [-bound, bound]
  double symmetric(double bound) { return uniform(-bound, bound); }

  // [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // modulo bias is negligible for the n used here (dataset sizes)
    return next_u64() % n;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace rit
