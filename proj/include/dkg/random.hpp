#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dkg/dirac_algebra.hpp"

namespace dkg {

using Rng = std::mt19937_64;

/// Uniform direction on S^2.
inline Vec3 random_direction(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.squaredNorm() < 1e-24);
  return v.normalized();
}

/// Radius log-uniform on [lo, hi] times a uniform direction.
inline Vec3 random_log_vector(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng)) * random_direction(rng);
}

inline Spinor random_spinor(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Spinor v;
  for (int i = 0; i < 4; ++i) v(i) = cd(g(rng), g(rng));
  return v;
}

/// Seed for shard i derived from a base seed (splitmix64 step).
inline std::uint64_t shard_seed(std::uint64_t base, std::uint64_t i) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dkg
