#pragma once

#include <cstdint>
#include <random>

namespace madmix {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby seeds before they reach the engine.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL)));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double gamma_draw(Rng& rng, double shape, double scale) {
  std::gamma_distribution<double> dist(shape, scale);
  return dist(rng);
}

inline double beta_draw(Rng& rng, double a, double b) {
  const double x = gamma_draw(rng, a, 1.0);
  const double y = gamma_draw(rng, b, 1.0);
  return x / (x + y);
}

}  // namespace madmix
