#pragma once

#include <cmath>
#include <cstdint>

namespace rtpower {

// Deterministic, platform-independent random numbers. Everything downstream
// (simulation, bootstrap, power replicates) derives keyed substreams from a
// master seed, so results never depend on row order, scheduling, or thread
// count. std::normal_distribution and friends are implementation-defined and
// must not be used anywhere in this library.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// xoshiro256++ (Blackman & Vigna, public domain reference implementation).
class Xoshiro256 {
public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x = splitmix64(x);
      word = x;
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1); never returns 0 or 1, safe for log/atanh transforms.
  double next_uniform() {
    const std::uint64_t bits = next_u64() >> 11; // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Uses explicit libm calls so that any
  // two builds on the same platform produce identical streams.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// A lightweight key that names a point in the substream tree. Substreams are
// derived by hashing (key, index) pairs, so rng_for() on the same path always
// yields the same generator no matter when or where it is called.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : key_(splitmix64(seed ^ kRootTag)) {}

  RngStream substream(std::uint64_t index) const {
    RngStream child = *this;
    child.key_ = splitmix64(key_ ^ splitmix64(index + kChildTag));
    return child;
  }

  Xoshiro256 generator() const { return Xoshiro256(key_); }

  std::uint64_t key() const { return key_; }

private:
  static constexpr std::uint64_t kRootTag = 0x243f6a8885a308d3ULL;
  static constexpr std::uint64_t kChildTag = 0x13198a2e03707344ULL;

  std::uint64_t key_ = 0;
};

// Fixed top-level stream indices. Adding entries is fine; reordering breaks
// reproducibility of published seeds.
enum StreamTag : std::uint64_t {
  kStreamParticipantEffects = 1,
  kStreamItemEffects = 2,
  kStreamResiduals = 3,
  kStreamTrialOrder = 4,
  kStreamPowerCell = 5,
  kStreamResidualSweep = 6,
  kStreamBootstrap = 7,
};

} // namespace rtpower
