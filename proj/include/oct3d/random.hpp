#ifndef OCT3D_RANDOM_HPP
#define OCT3D_RANDOM_HPP

#include <oct3d/error.hpp>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace oct3d {

using Rng = std::mt19937_64;

/// Independent stream for a (seed, a, b, ...) key. Used wherever work is split
/// per epoch / sample / trial so results do not depend on execution order.
inline Rng make_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(key.size() * 2 + 1);
  words.push_back(0x6f637433u);
  for (auto k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Inclusive integer range [lo, hi].
inline long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

/// Beta(a, b) via the ratio of two Gamma draws.
inline double sample_beta(Rng& rng, double a, double b) {
  if (!(a > 0) || !(b > 0)) throw ValueError("beta distribution parameters must be > 0");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  for (;;) {
    const double x = ga(rng), y = gb(rng);
    // both draws can underflow to zero for small shape parameters
    if (x + y > 0) return x / (x + y);
  }
}

}  // namespace oct3d

#endif  // OCT3D_RANDOM_HPP
