#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace eshotgun {

using Vector = Eigen::VectorXd;
/// Locations are stored one per row.
using Matrix = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kernel matrix could not be Cholesky-factorised, even after jitter escalation.
class FactorisationFailure : public Error {
 public:
  using Error::Error;
};

class AllRestartsFailed : public Error {
 public:
  using Error::Error;
};

class DuplicateLocation : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration (unknown names, bad counts, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned box [lower, upper] in R^d.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw ConfigError("box bounds must be non-empty and of equal dimension");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!(upper[i] > lower[i])) throw ConfigError("box must satisfy upper > lower in every dimension");
    }
  }

  static Box unit(int d) { return Box(Vector::Zero(d), Vector::Ones(d)); }

  static Box uniform(int d, double lo, double hi) {
    return Box(Vector::Constant(d, lo), Vector::Constant(d, hi));
  }

  int dim() const { return static_cast<int>(lower.size()); }
  Vector width() const { return upper - lower; }
  double diagonal() const { return width().norm(); }
  Vector centre() const { return 0.5 * (lower + upper); }

  bool contains(const Vector& x, double tol = 0.0) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)) return false;
    }
    return true;
  }

  Vector clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

  /// Intersection with another box; degenerate intersections are widened to a sliver
  /// around the nearest face so the result stays a valid box.
  Box intersect(const Box& other) const {
    Vector lo = lower.cwiseMax(other.lower);
    Vector hi = upper.cwiseMin(other.upper);
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!(hi[i] > lo[i])) {
        const double eps = 1e-12 * std::max(1.0, upper[i] - lower[i]);
        const double mid = std::clamp(0.5 * (lo[i] + hi[i]), lower[i], upper[i]);
        lo[i] = std::max(lower[i], mid - eps);
        hi[i] = std::min(upper[i], mid + eps);
        if (!(hi[i] > lo[i])) hi[i] = lo[i] + eps;
      }
    }
    return Box(lo, hi);
  }

  /// [centre - halfwidth, centre + halfwidth] intersected with this box.
  Box around(const Vector& centre_point, const Vector& halfwidth) const {
    return intersect(Box(centre_point - halfwidth, centre_point + halfwidth));
  }
};

}  // namespace eshotgun
