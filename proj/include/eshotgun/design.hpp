#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "eshotgun/random.hpp"
#include "eshotgun/types.hpp"

namespace eshotgun {

/// Random Latin hypercube in [0, 1]^d: each column has one point per 1/n stratum.
inline Matrix latin_hypercube(int n, int d, Rng& rng) {
  Matrix x(n, d);
  std::vector<int> perm(n);
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) x(i, j) = (perm[i] + uniform01(rng)) / n;
  }
  return x;
}

inline double min_pairwise_distance(const Matrix& x) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) best = std::min(best, (x.row(i) - x.row(j)).squaredNorm());
  }
  return std::sqrt(best);
}

struct InitialDesign {
  Matrix points;  ///< n x d, in the unit hypercube
  std::uint64_t rng_seed = 0;

  /// Points mapped affinely into `box`.
  Matrix in(const Box& box) const {
    Matrix out = points.array().rowwise() * box.width().transpose().array();
    return out.rowwise() + box.lower.transpose();
  }
};

/// Best of `n_designs` random Latin hypercubes under the maximin (largest minimum
/// pairwise distance) criterion.
inline InitialDesign latin_hypercube_maximin(int n, int d, std::uint64_t seed, int n_designs = 100) {
  if (n < 2) throw ConfigError("Latin hypercube needs n >= 2");
  if (d < 1 || n_designs < 1) throw ConfigError("Latin hypercube needs d >= 1 and n_designs >= 1");
  Rng rng(seed);
  InitialDesign best{latin_hypercube(n, d, rng), seed};
  double best_distance = min_pairwise_distance(best.points);
  for (int k = 1; k < n_designs; ++k) {
    Matrix candidate = latin_hypercube(n, d, rng);
    const double dist = min_pairwise_distance(candidate);
    if (dist > best_distance) {
      best_distance = dist;
      best.points = std::move(candidate);
    }
  }
  return best;
}

}  // namespace eshotgun
