#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace provmark {

// Splittable counter-based generator (splitmix64 core). Every consumer takes
// its own split() stream, so adding draws in one component never shifts the
// sequence seen by another — that property is what makes training runs
// bit-reproducible across refactors. No libc/std distributions anywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x1f123bb5159a55e5ull)) {}

  // Independent child stream. Children with different tags never collide
  // with each other or with draws from this stream.
  Rng split(uint64_t tag) const {
    return Rng(mix(state_ + 0x2545f4914f6cdd1dull * (tag + 1)));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // [0,1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, Lemire reduction (no modulo bias)
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t v = next_u64();
    return lo + static_cast<int>(
                    (static_cast<unsigned __int128>(v) * span) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal via Box-Muller; pairs are cached
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    cache_ = r * std::sin(t);
    have_cache_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(p[static_cast<size_t>(i)],
                p[static_cast<size_t>(uniform_int(0, i))]);
    return p;
  }

 private:
  explicit Rng(uint64_t raw, int) : state_(raw) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

}  // namespace provmark
