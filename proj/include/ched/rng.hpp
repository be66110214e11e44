#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ched {

// Deterministic random source. All sampling is derived from raw mt19937_64
// draws (the engine is fully specified by the standard, unlike the
// std distributions), so identical seeds give identical streams on any
// platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be >= 1.
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  }

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Derive an independent stream, e.g. one per epoch.
  Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ched
