#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "eshotgun/types.hpp"

namespace eshotgun {

using Objective = std::function<double(const Vector&)>;

struct ProblemSpec {
  std::string name;
  Box bounds;
  /// Best known value, from dense probing plus local refinement.
  double reference_minimum = 0.0;
  Objective function;

  int dim() const { return bounds.dim(); }

  double evaluate(const Vector& x) const {
    if (x.size() != dim()) throw OutOfBounds(name + ": wrong input dimension");
    if (!bounds.contains(x)) throw OutOfBounds(name + ": location outside the problem box");
    return function(x);
  }
};

namespace functions {

inline double wang_freitas(const Vector& x) {
  constexpr double a = 0.1, b = 0.9, theta1 = 0.1, theta2 = 0.01;
  const double u = (x[0] - a) / theta1, v = (x[0] - b) / theta2;
  return -(2.0 * std::exp(-0.5 * u * u) + 4.0 * std::exp(-0.5 * v * v));
}

inline double branin(const Vector& x) {
  using std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi), c = 5.0 / pi, r = 6.0, s = 10.0, t = 1.0 / (8.0 * pi);
  const double q = x[1] - b * x[0] * x[0] + c * x[0] - r;
  return q * q + s * (1.0 - t) * std::cos(x[0]) + s;
}

inline double branin_forrester(const Vector& x) { return branin(x) + 5.0 * x[0]; }

inline double cosines(const Vector& x) {
  double g = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = 1.6 * x[i] - 0.5;
    g -= u * u - 0.3 * std::cos(3.0 * std::numbers::pi * u);
  }
  return -g;
}

inline double log_goldstein_price(const Vector& x) {
  const double x1 = x[0], x2 = x[1];
  const double s = x1 + x2 + 1.0, t = 2.0 * x1 - 3.0 * x2;
  const double a = 1.0 + s * s * (19.0 - 14.0 * x1 + 3.0 * x1 * x1 - 14.0 * x2 + 6.0 * x1 * x2 + 3.0 * x2 * x2);
  const double b =
      30.0 + t * t * (18.0 - 32.0 * x1 + 12.0 * x1 * x1 + 48.0 * x2 - 36.0 * x1 * x2 + 27.0 * x2 * x2);
  return std::log(a * b);
}

inline double log_six_hump_camel(const Vector& x) {
  const double x1 = x[0], x2 = x[1];
  const double g = (4.0 - 2.1 * x1 * x1 + x1 * x1 * x1 * x1 / 3.0) * x1 * x1 + x1 * x2 + (-4.0 + 4.0 * x2 * x2) * x2 * x2;
  return std::log(g + 1.0316 + 1e-4);
}

inline double mod_hartman6(const Vector& x) {
  static constexpr std::array<double, 4> alpha{1.0, 1.2, 3.0, 3.2};
  static constexpr double A[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                     {0.05, 10, 17, 0.1, 8, 14},
                                     {3, 3.5, 1.7, 10, 17, 8},
                                     {17, 8, 0.05, 10, 0.1, 14}};
  static constexpr double P[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                     {2329, 4135, 8307, 3736, 1004, 9991},
                                     {2348, 1451, 3522, 2883, 3047, 6650},
                                     {4047, 8828, 8732, 5743, 1091, 381}};
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double diff = x[j] - 1e-4 * P[i][j];
      inner += A[i][j] * diff * diff;
    }
    sum += alpha[i] * std::exp(-inner);
  }
  return -std::log(sum);
}

/// Sobol g-function with a_i = 1 for every coordinate.
inline double log_g_sobol(const Vector& x) {
  double log_g = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) log_g += std::log((std::abs(4.0 * x[i] - 2.0) + 1.0) / 2.0);
  return log_g;
}

inline double log_rosenbrock(const Vector& x) {
  double g = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i], b = x[i] - 1.0;
    g += 100.0 * a * a + b * b;
  }
  return std::log(g + 0.5);
}

inline double log_styblinski_tang(const Vector& x) {
  double g = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i];
    g += v * v * v * v - 16.0 * v * v + 5.0 * v;
  }
  return std::log(0.5 * g + 40.0 * static_cast<double>(x.size()));
}

}  // namespace functions

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"wangfreitas",       "branin",          "braninforrester", "cosines",
                                              "loggoldsteinprice", "logsixhumpcamel", "modhartman6",     "loggsobol",
                                              "logrosenbrock",     "logstyblinskitang"};
  return names;
}

/// Looks a problem up by its lowercase name. `bounds` overrides the default domain.
inline ProblemSpec make_problem(const std::string& name, const std::optional<Box>& bounds = std::nullopt) {
  auto box2 = [](double l1, double u1, double l2, double u2) {
    Vector lo(2), hi(2);
    lo << l1, l2;
    hi << u1, u2;
    return Box(lo, hi);
  };
  ProblemSpec p;
  p.name = name;
  if (name == "wangfreitas") {
    p = {name, Box::uniform(1, 0.0, 1.0), -4.000000000000026, functions::wang_freitas};
  } else if (name == "branin") {
    p = {name, box2(-5, 10, 0, 15), 0.39788735772973816, functions::branin};
  } else if (name == "braninforrester") {
    p = {name, box2(-5, 10, 0, 15), -16.644021570843194, functions::branin_forrester};
  } else if (name == "cosines") {
    p = {name, Box::uniform(2, 0.0, 1.0), -1.6, functions::cosines};
  } else if (name == "loggoldsteinprice") {
    p = {name, Box::uniform(2, -2.0, 2.0), 1.0986122886681098, functions::log_goldstein_price};
  } else if (name == "logsixhumpcamel") {
    p = {name, box2(-3, 3, -2, 2), -9.54516282851685, functions::log_six_hump_camel};
  } else if (name == "modhartman6") {
    p = {name, Box::uniform(6, 0.0, 1.0), -1.2006777851323596, functions::mod_hartman6};
  } else if (name == "loggsobol") {
    p = {name, Box::uniform(10, 0.0, 1.0), -6.931471805599453, functions::log_g_sobol};
  } else if (name == "logrosenbrock") {
    p = {name, Box::uniform(10, -5.0, 10.0), -0.6931471805599453, functions::log_rosenbrock};
  } else if (name == "logstyblinskitang") {
    p = {name, Box::uniform(10, -5.0, 5.0), 2.1208645110528245, functions::log_styblinski_tang};
  } else {
    throw ConfigError("unknown problem: " + name);
  }
  if (bounds) {
    if (bounds->dim() != p.dim()) throw ConfigError("override bounds have the wrong dimension for " + name);
    p.bounds = *bounds;
  }
  return p;
}

}  // namespace eshotgun
