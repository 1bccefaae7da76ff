#pragma once

#include <cstdint>
#include <random>

#include "eshotgun/types.hpp"

namespace eshotgun {

using Rng = std::mt19937_64;

// splitmix64 finaliser; used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based split: the same (base, index, stream) triple always yields the same seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream) {
  return mix_seed(mix_seed(mix_seed(base) ^ index) + 0x632be59bd9b4e019ULL * (stream + 1));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline Vector uniform_in(const Box& box, Rng& rng) {
  Vector x(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    x[i] = std::uniform_real_distribution<double>(box.lower[i], box.upper[i])(rng);
  }
  return box.clip(x);
}

inline Matrix uniform_in(const Box& box, int n, Rng& rng) {
  Matrix x(n, box.dim());
  for (int r = 0; r < n; ++r) x.row(r) = uniform_in(box, rng).transpose();
  return x;
}

inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace eshotgun
