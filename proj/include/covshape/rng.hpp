#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace covshape::rng {

// splitmix64, used for seed expansion and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Per-path seed derivation: every stochastic object in the library is seeded
// through this function, so a run is fully determined by (master seed, stream
// tag, index).  The scheme is:
//   s0     = splitmix64(master ^ fnv1a64(tag))
//   seed_i = splitmix64(s0 ^ (i + 1) * 0x9E3779B97F4A7C15)
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index) {
  std::uint64_t s = master ^ fnv1a64(tag);
  std::uint64_t s0 = splitmix64(s);
  std::uint64_t t = s0 ^ ((index + 1) * 0x9E3779B97F4A7C15ULL);
  return splitmix64(t);
}

// xoshiro256++ (Blackman & Vigna).  Seeded by splitmix64 expansion.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed = 1) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t operator()() {
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

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_;
};

namespace detail {

// Ziggurat tables for the standard normal (Doornik's formulation, 128 strips).
struct ZigguratTables {
  static constexpr int kStrips = 128;
  std::array<double, kStrips + 1> x;   // strip right edges, x[0] > x[1] > ...
  std::array<double, kStrips + 1> f;   // exp(-x^2/2) at the edges
  std::array<double, kStrips> ratio;   // x[i+1] / x[i]

  ZigguratTables() {
    const double r = 3.442619855899;            // right edge of the base strip
    const double v = 9.91256303526217e-3;       // area of each strip
    x[0] = v / std::exp(-0.5 * r * r);
    x[1] = r;
    x[kStrips] = 0.0;
    for (int i = 2; i < kStrips; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(v / x[i - 1] +
                                       std::exp(-0.5 * x[i - 1] * x[i - 1])));
    }
    for (int i = 0; i <= kStrips; ++i) f[i] = std::exp(-0.5 * x[i] * x[i]);
    for (int i = 0; i < kStrips; ++i) ratio[i] = x[i + 1] / x[i];
  }
};

inline const ZigguratTables& ziggurat() {
  static const ZigguratTables tables;
  return tables;
}

}  // namespace detail

// Standard normal sampler (ziggurat with exact wedge/tail fallback).
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed = 1) : rng_(seed) {}

  double operator()() {
    const auto& z = detail::ziggurat();
    for (;;) {
      const std::uint64_t bits = rng_();
      const int i = static_cast<int>(bits & 127);
      const bool negative = (bits >> 7) & 1;
      const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
      if (u < z.ratio[i]) {
        const double value = u * z.x[i];
        return negative ? -value : value;
      }
      if (i == 0) {
        // tail beyond x[1] = r
        const double r = z.x[1];
        double xt, yt;
        do {
          xt = -std::log(1.0 - rng_.uniform()) / r;
          yt = -std::log(1.0 - rng_.uniform());
        } while (2.0 * yt <= xt * xt);
        const double value = r + xt;
        return negative ? -value : value;
      }
      const double xv = u * z.x[i];
      const double fv = z.f[i + 1] + rng_.uniform() * (z.f[i] - z.f[i + 1]);
      if (fv < std::exp(-0.5 * xv * xv)) return negative ? -xv : xv;
    }
  }

  double uniform() { return rng_.uniform(); }
  Xoshiro256pp& engine() { return rng_; }

 private:
  Xoshiro256pp rng_;
};

}  // namespace covshape::rng
