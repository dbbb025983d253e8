#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "common.hpp"

namespace bethe {

// Counter-based generator: output k of stream (seed, stream) is the SplitMix64
// finalizer applied to key + (k+1)*golden, with key derived from (seed, stream).
// Any draw can be recomputed from (seed, stream, k) alone, so parallel chunks
// own disjoint streams and results do not depend on scheduling.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))), counter_(0) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (++counter_) * kGolden); }

  // uniform on [0,1)
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the map unbiased.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = (*this)();
      if (r >= threshold) return r % n;
    }
  }

  // standard normal via Box-Muller, one value per call
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // standard complex Gaussian: E|z|^2 = 1
  cplx complex_normal() {
    double a = normal(), b = normal();
    return {a / std::sqrt(2.0), b / std::sqrt(2.0)};
  }

  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng seeded_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, stream); }

// Fisher-Yates
inline std::vector<int> random_permutation(int m, Rng& rng) {
  std::vector<int> p(m);
  std::iota(p.begin(), p.end(), 0);
  for (int i = m - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

}  // namespace bethe
