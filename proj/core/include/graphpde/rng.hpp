#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <vector>

namespace gpde {

// Deterministic PRNG (xoshiro256** seeded via splitmix64). All distribution
// transforms are hand-rolled so sequences are identical across standard
// libraries and platforms; std::<distribution> makes no such promise.
class Rng {
public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix(x);
    second_ = 0.0;
    has_second_ = false;
  }

  // Independent substream derived from (seed, ids...). Used to give every
  // (sample, step, purpose) tuple its own reproducible stream regardless of
  // scheduling order.
  static Rng fork(uint64_t seed, std::initializer_list<uint64_t> ids) {
    uint64_t h = seed;
    for (uint64_t id : ids) {
      uint64_t x = id + 0x9e3779b97f4a7c15ULL;
      h ^= splitmix(x);
      h = splitmix(h);
    }
    return Rng(h);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_second_) {
      has_second_ = false;
      return second_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    second_ = r * std::sin(a);
    has_second_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    const uint64_t limit = ~uint64_t(0) - ~uint64_t(0) % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Index drawn according to non-negative weights.
  int choice(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
      r -= weights[i];
      if (r < 0.0) return int(i);
    }
    return int(weights.size()) - 1;
  }

private:
  static uint64_t splitmix(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  double second_;
  bool has_second_;
};

}  // namespace gpde
