#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "sspe/geometry.hpp"

namespace sspe {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a path of ids,
// e.g. derive_seed(master, {scene_id}) or derive_seed(master, {step, scene}).
// Depends only on its arguments, so work items can run in any order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

// Uniform over SO(3): a normalized 4D standard Gaussian.
inline Quaternion random_rotation(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Quaternion q{g(rng), g(rng), g(rng), g(rng)};
    if (q.norm() > 1e-6) return quat_normalize(q).canonical();
  }
}

}  // namespace sspe
