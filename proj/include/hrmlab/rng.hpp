#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hrmlab {

// Deterministic RNG used everywhere randomness is needed.
//
// std::mt19937_64 has a standard-fixed output sequence, so equal seeds give
// byte-identical results on every platform. The bounded draw and the unit
// double below are implemented by hand because std::uniform_*_distribution
// is implementation-defined and would break cross-platform determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, n). Rejection sampling, unbiased. n must be nonzero.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Fisher-Yates over the whole vector.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Poisson draw via Knuth's product method; deterministic given the engine
  // state. Fine for the arrival rates this project deals in (lambda < ~500).
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    // Split large lambdas so exp(-lambda) stays representable.
    std::uint64_t total = 0;
    while (lambda > 200.0) {
      total += poisson(200.0);
      lambda -= 200.0;
    }
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= unit();
    } while (p > limit);
    return total + k - 1;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace hrmlab
