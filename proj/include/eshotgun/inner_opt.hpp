#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "eshotgun/design.hpp"
#include "eshotgun/random.hpp"
#include "eshotgun/types.hpp"

namespace eshotgun {

struct SearchBudget {
  long max_evaluations = 10000;
  int restarts = 10;
  std::uint64_t rng_seed = 0;

  /// The 10000 * d evaluation budget used for every acquisition maximisation.
  static SearchBudget for_dimension(int d, std::uint64_t seed, int restarts = 10) {
    return SearchBudget{10000L * d, restarts, seed};
  }

  void validate() const {
    if (max_evaluations < 100) throw ConfigError("search budget needs at least 100 evaluations");
    if (restarts < 1) throw ConfigError("search budget needs at least one restart");
  }
};

/// A cheap deterministic objective over a box, optionally with derivatives.
struct ScalarField {
  Box bounds;
  std::function<double(const Vector&)> value;
  /// Returns the value and writes the gradient.
  std::function<double(const Vector&, Vector&)> value_and_gradient;
  /// Values at the rows of a matrix.
  std::function<Vector(const Matrix&)> batch_value;
  std::function<Matrix(const Vector&)> hessian;

  bool has_gradient() const { return static_cast<bool>(value_and_gradient); }

  double operator()(const Vector& x) const { return value(x); }

  Vector evaluate_rows(const Matrix& x) const {
    if (batch_value) return batch_value(x);
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = value(x.row(i).transpose());
    return out;
  }

  Vector gradient(const Vector& x) const {
    Vector g;
    value_and_gradient(x, g);
    return g;
  }
};

struct OptimumResult {
  Vector location;
  double value = -std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

namespace detail {

inline bool is_fixed(const Box& box, const Vector& x, const Vector& g, Eigen::Index i) {
  return (x[i] <= box.lower[i] && g[i] < 0.0) || (x[i] >= box.upper[i] && g[i] > 0.0);
}

// Projected L-BFGS ascent with backtracking along the projected path.
inline OptimumResult gradient_ascent(const ScalarField& field, const Vector& start, long max_evals) {
  const Box& box = field.bounds;
  const double scale = box.diagonal();
  Vector x = box.clip(start);
  Vector g;
  double f = field.value_and_gradient(x, g);
  long evals = 1;
  std::deque<std::pair<Vector, Vector>> memory;
  constexpr std::size_t kMemory = 8;

  while (evals < max_evals) {
    Vector pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (is_fixed(box, x, g, i)) pg[i] = 0.0;
    }
    if (!(pg.cwiseProduct(box.width()).norm() > 1e-13 * (1.0 + std::abs(f)))) break;

    // Two-loop recursion: direction = H * pg, H the inverse-Hessian estimate of -f.
    Vector dir = pg;
    std::vector<double> alphas(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, y] = memory[k];
      alphas[k] = s.dot(dir) / y.dot(s);
      dir -= alphas[k] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      dir *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      const double beta = y.dot(dir) / y.dot(s);
      dir += (alphas[k] - beta) * s;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (pg[i] == 0.0) dir[i] = 0.0;
    }
    if (!(dir.dot(pg) > 0.0)) {
      dir = pg;
      memory.clear();
    }

    double t = memory.empty() ? std::min(1.0, 0.1 * scale / dir.norm()) : 1.0;
    bool accepted = false;
    Vector xn;
    Vector gn;
    double fn = f;
    for (int ls = 0; ls < 40 && evals < max_evals; ++ls) {
      xn = box.clip(x + t * dir);
      if ((xn - x).norm() <= 1e-15 * scale) break;
      fn = field.value_and_gradient(xn, gn);
      ++evals;
      if (fn >= f + 1e-4 * pg.dot(xn - x) && std::isfinite(fn)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    const Vector s = xn - x;
    const Vector y = g - gn;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (memory.size() > kMemory) memory.pop_front();
    }
    const double gain = fn - f;
    x = xn;
    f = fn;
    g = gn;
    if (gain <= 1e-14 * (1.0 + std::abs(f)) && s.norm() <= 1e-10 * scale) break;
  }
  return {x, f, evals};
}

// Compass (coordinate pattern) search for fields without gradients.
inline OptimumResult pattern_search(const ScalarField& field, const Vector& start, long max_evals) {
  const Box& box = field.bounds;
  const Vector width = box.width();
  Vector x = box.clip(start);
  double f = field.value(x);
  long evals = 1;
  Vector step = 0.05 * width;
  while (evals < max_evals && (step.array() > 1e-9 * width.array()).any()) {
    bool improved = false;
    for (Eigen::Index i = 0; i < x.size() && evals < max_evals; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vector xn = x;
        xn[i] = std::clamp(x[i] + sign * step[i], box.lower[i], box.upper[i]);
        if (xn[i] == x[i]) continue;
        const double fn = field.value(xn);
        ++evals;
        if (fn > f) {
          x = std::move(xn);
          f = fn;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {x, f, evals};
}

// Indices of the best values, skipping points within `min_separation` of an already chosen one.
inline std::vector<Eigen::Index> diverse_best(const Matrix& points, const Vector& values, int count,
                                              double min_separation) {
  std::vector<Eigen::Index> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
  std::vector<Eigen::Index> chosen;
  for (auto idx : order) {
    if (static_cast<int>(chosen.size()) >= count) break;
    if (!std::isfinite(values[idx])) continue;
    bool far = true;
    for (auto c : chosen) {
      if ((points.row(idx) - points.row(c)).norm() < min_separation) {
        far = false;
        break;
      }
    }
    if (far) chosen.push_back(idx);
  }
  return chosen;
}

inline void keep_best(OptimumResult& best, const Vector& x, double v) {
  if (v > best.value || best.location.size() == 0) {
    best.location = x;
    best.value = v;
  }
}

}  // namespace detail

/// Bounded local ascent from `start`: gradient-based when the field has a gradient,
/// otherwise compass search. The returned location is inside the bounds.
inline OptimumResult local_maximize(const ScalarField& field, const Vector& start, long max_evals) {
  return field.has_gradient() ? detail::gradient_ascent(field, start, max_evals)
                              : detail::pattern_search(field, start, max_evals);
}

/// Budgeted multi-start maximisation over the field's box.
///
/// A space-filling probe (dense grid for d = 1, Latin hypercube otherwise) seeds
/// `restarts` local ascents from its best, mutually separated points. The budget is
/// an upper bound; ascents stop early once converged.
inline OptimumResult global_maximize(const ScalarField& field, const SearchBudget& budget) {
  budget.validate();
  const Box& box = field.bounds;
  const int d = box.dim();
  Rng rng(budget.rng_seed);

  Matrix probe;
  if (d == 1) {
    const int n = static_cast<int>(std::min<long>(1000, budget.max_evaluations / 2));
    probe.resize(n, 1);
    for (int i = 0; i < n; ++i) probe(i, 0) = box.lower[0] + (i + 0.5) / n * box.width()[0];
  } else {
    const long n = std::clamp<long>(budget.max_evaluations / 10, 256, budget.max_evaluations / 2);
    const Matrix unit = latin_hypercube(static_cast<int>(n), d, rng);
    probe = (unit.array().rowwise() * box.width().transpose().array()).matrix().rowwise() +
            box.lower.transpose();
  }
  const Vector values = field.evaluate_rows(probe);
  long used = probe.rows();

  OptimumResult best;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    if (std::isfinite(values[i])) detail::keep_best(best, probe.row(i).transpose(), values[i]);
  }
  if (best.location.size() == 0) best = {box.centre(), field.value(box.centre()), 0};

  const double separation = d == 1 ? 2.0 * box.width()[0] / probe.rows() : 0.05 * box.diagonal();
  const auto starts = detail::diverse_best(probe, values, budget.restarts, separation);
  const long remaining = budget.max_evaluations - used;
  const long per_start = starts.empty() ? 0 : remaining / static_cast<long>(starts.size());
  for (auto idx : starts) {
    if (per_start < 2) break;
    const auto local = local_maximize(field, probe.row(idx).transpose(), per_start);
    used += local.evaluations;
    detail::keep_best(best, local.location, local.value);
  }
  best.location = box.clip(best.location);
  best.value = field.value(best.location);
  best.evaluations = used + 1;
  return best;
}

/// Uniformly samples `n_samples` locations, locally refines the `n_refine` best and
/// returns the overall best. Each refinement gets an equal share of the budget.
inline OptimumResult presample_then_refine(const ScalarField& field, int n_samples, int n_refine,
                                           const SearchBudget& budget) {
  if (n_refine < 1 || n_samples < n_refine) throw ConfigError("presample needs n_samples >= n_refine >= 1");
  Rng rng(budget.rng_seed);
  const Matrix samples = uniform_in(field.bounds, n_samples, rng);
  const Vector values = field.evaluate_rows(samples);
  std::vector<Eigen::Index> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });

  OptimumResult best;
  long used = n_samples;
  for (int i = 0; i < n_samples; ++i) {
    if (std::isfinite(values[i])) detail::keep_best(best, samples.row(i).transpose(), values[i]);
  }
  const long per_start = std::max<long>(budget.max_evaluations / n_refine, 2);
  for (int k = 0; k < n_refine; ++k) {
    const auto local = local_maximize(field, samples.row(order[k]).transpose(), per_start);
    used += local.evaluations;
    detail::keep_best(best, local.location, local.value);
  }
  best.evaluations = used;
  return best;
}

/// Field whose value is the Euclidean norm of `field`'s gradient. Its own gradient is
/// available when `field` supplies a Hessian.
inline ScalarField gradient_norm_field(const ScalarField& field, const Box& region) {
  ScalarField norm;
  norm.bounds = region;
  norm.value = [&field](const Vector& x) {
    Vector g;
    field.value_and_gradient(x, g);
    return g.norm();
  };
  if (field.hessian) {
    norm.value_and_gradient = [&field](const Vector& x, Vector& grad) {
      Vector g;
      field.value_and_gradient(x, g);
      const double n = g.norm();
      grad = n > 0.0 ? Vector(field.hessian(x) * g / n) : Vector(Vector::Zero(x.size()));
      return n;
    };
  }
  return norm;
}

/// Largest gradient norm of `field` over `region`, floored at `floor`.
inline double estimate_lipschitz(const ScalarField& field, const Box& region, double floor,
                                 const SearchBudget& budget) {
  if (!field.has_gradient()) throw ConfigError("Lipschitz estimation needs a field with a gradient");
  const ScalarField norm = gradient_norm_field(field, region);
  const auto best = global_maximize(norm, budget);
  return std::max(best.value, floor);
}

/// Lipschitz estimate over the hypercube centre +- halfwidth, clipped to the field's bounds.
inline double estimate_local_lipschitz(const ScalarField& field, const Vector& centre, const Vector& halfwidth,
                                       double floor, const SearchBudget& budget) {
  if (!(halfwidth.array() > 0.0).all()) throw ConfigError("Lipschitz halfwidth must be positive");
  return estimate_lipschitz(field, field.bounds.around(centre, halfwidth), floor, budget);
}

inline double estimate_local_lipschitz(const ScalarField& field, const Vector& centre, double halfwidth,
                                       double floor, const SearchBudget& budget) {
  return estimate_local_lipschitz(field, centre, Vector::Constant(centre.size(), halfwidth), floor, budget);
}

}  // namespace eshotgun
