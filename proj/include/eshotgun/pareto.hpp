#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "eshotgun/design.hpp"
#include "eshotgun/gp.hpp"
#include "eshotgun/random.hpp"

namespace eshotgun {

/// Two objectives, both minimised.
using ObjectivePair = std::array<double, 2>;

struct BiObjectivePoint {
  Vector location;
  double mean = 0.0;
  double variance = 0.0;

  /// (mu, -sigma^2): exploitation and exploration, both minimised.
  ObjectivePair objectives() const { return {mean, -variance}; }
};

struct Nsga2Config {
  int population = 100;
  int generations = 50;
  double mutation_rate = 1.0;
  double crossover_rate = 0.8;
  double eta_c = 20.0;
  double eta_m = 20.0;
  std::uint64_t rng_seed = 0;

  /// 100 d individuals, mutation rate 1/d.
  static Nsga2Config for_dimension(int d, std::uint64_t seed) {
    Nsga2Config c;
    c.population = 100 * d;
    c.mutation_rate = 1.0 / d;
    c.rng_seed = seed;
    return c;
  }

  void validate() const {
    if (population < 4 || population % 2 != 0) throw ConfigError("NSGA-II population must be even and >= 4");
    if (generations < 0) throw ConfigError("NSGA-II generations must be >= 0");
    if (mutation_rate < 0.0 || mutation_rate > 1.0 || crossover_rate < 0.0 || crossover_rate > 1.0) {
      throw ConfigError("NSGA-II rates must lie in [0, 1]");
    }
  }
};

inline bool dominates(const ObjectivePair& a, const ObjectivePair& b) {
  return a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
}

/// Indices (ascending) of the mutually non-dominated points; equal pairs are all kept.
inline std::vector<std::size_t> non_dominated_filter(const std::vector<ObjectivePair>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return points[a] < points[b]; });
  std::vector<std::size_t> kept;
  double best_second = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    // Group of equal first objective; its minimum second objective is order[i].
    std::size_t j = i;
    const double group_min = points[order[i]][1];
    while (j < order.size() && points[order[j]][0] == points[order[i]][0]) {
      if (points[order[j]][1] == group_min && group_min < best_second) kept.push_back(order[j]);
      ++j;
    }
    best_second = std::min(best_second, group_min);
    i = j;
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace detail {

// Deb's fast non-dominated sort; returns the front index of every point.
inline std::vector<int> non_dominated_ranks(const std::vector<ObjectivePair>& obj) {
  const std::size_t n = obj.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> counts(n, 0);
  std::vector<int> rank(n, 0);
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (dominates(obj[p], obj[q])) {
        dominated[p].push_back(q);
        ++counts[q];
      } else if (dominates(obj[q], obj[p])) {
        dominated[q].push_back(p);
        ++counts[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (counts[p] == 0) current.push_back(p);
  }
  int front = 0;
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (auto p : current) {
      rank[p] = front;
      for (auto q : dominated[p]) {
        if (--counts[q] == 0) next.push_back(q);
      }
    }
    current = std::move(next);
    ++front;
  }
  return rank;
}

inline void crowding_distance(const std::vector<ObjectivePair>& obj, const std::vector<std::size_t>& members,
                              std::vector<double>& distance) {
  if (members.size() <= 2) {
    for (auto m : members) distance[m] = std::numeric_limits<double>::infinity();
    return;
  }
  for (auto m : members) distance[m] = 0.0;
  std::vector<std::size_t> sorted = members;
  for (int k = 0; k < 2; ++k) {
    std::sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return obj[a][k] < obj[b][k]; });
    const double span = obj[sorted.back()][k] - obj[sorted.front()][k];
    distance[sorted.front()] = distance[sorted.back()] = std::numeric_limits<double>::infinity();
    if (!(span > 0.0)) continue;
    for (std::size_t i = 1; i + 1 < sorted.size(); ++i) {
      distance[sorted[i]] += (obj[sorted[i + 1]][k] - obj[sorted[i - 1]][k]) / span;
    }
  }
}

inline void sbx_crossover(Vector& a, Vector& b, const Box& box, double eta, Rng& rng) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (uniform01(rng) > 0.5 || std::abs(a[i] - b[i]) <= 1e-14) continue;
    const double y1 = std::min(a[i], b[i]);
    const double y2 = std::max(a[i], b[i]);
    const double lo = box.lower[i];
    const double hi = box.upper[i];
    const double u = uniform01(rng);
    auto spread = [&](double beta) {
      const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
      return u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (eta + 1.0))
                              : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0));
    };
    double c1 = 0.5 * ((y1 + y2) - spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1)) * (y2 - y1));
    double c2 = 0.5 * ((y1 + y2) + spread(1.0 + 2.0 * (hi - y2) / (y2 - y1)) * (y2 - y1));
    c1 = std::clamp(c1, lo, hi);
    c2 = std::clamp(c2, lo, hi);
    if (uniform01(rng) <= 0.5) std::swap(c1, c2);
    a[i] = c1;
    b[i] = c2;
  }
}

inline void polynomial_mutation(Vector& x, const Box& box, double rate, double eta, Rng& rng) {
  const double power = 1.0 / (eta + 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (uniform01(rng) > rate) continue;
    const double lo = box.lower[i];
    const double hi = box.upper[i];
    const double d1 = (x[i] - lo) / (hi - lo);
    const double d2 = (hi - x[i]) / (hi - lo);
    const double u = uniform01(rng);
    double dq;
    if (u < 0.5) {
      const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
      dq = std::pow(val, power) - 1.0;
    } else {
      const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
      dq = 1.0 - std::pow(val, power);
    }
    x[i] = std::clamp(x[i] + dq * (hi - lo), lo, hi);
  }
}

}  // namespace detail

/// Objective evaluator: rows of locations in, one ObjectivePair per row out.
using BiObjective = std::function<std::vector<ObjectivePair>(const Matrix&)>;

/// NSGA-II (binary tournament on rank and crowding, SBX crossover, polynomial
/// mutation, elitist survival). Returns the final population's locations and
/// objectives, restricted to its non-dominated members.
inline std::pair<Matrix, std::vector<ObjectivePair>> nsga2(const BiObjective& objective, const Box& box,
                                                           const Nsga2Config& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  const int n = cfg.population;
  const int d = box.dim();
  Matrix pop = (latin_hypercube(n, d, rng).array().rowwise() * box.width().transpose().array()).matrix();
  pop.rowwise() += box.lower.transpose();
  std::vector<ObjectivePair> obj = objective(pop);

  std::vector<int> rank = detail::non_dominated_ranks(obj);
  std::vector<double> crowd(n, 0.0);
  {
    const int fronts = *std::max_element(rank.begin(), rank.end()) + 1;
    std::vector<std::vector<std::size_t>> members(fronts);
    for (int i = 0; i < n; ++i) members[rank[i]].push_back(i);
    for (const auto& m : members) detail::crowding_distance(obj, m, crowd);
  }

  auto tournament = [&]() {
    const auto a = uniform_index(n, rng);
    const auto b = uniform_index(n, rng);
    if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
    if (crowd[a] != crowd[b]) return crowd[a] > crowd[b] ? a : b;
    return uniform01(rng) < 0.5 ? a : b;
  };

  for (int gen = 0; gen < cfg.generations; ++gen) {
    Matrix offspring(n, d);
    for (int k = 0; k < n; k += 2) {
      Vector c1 = pop.row(tournament()).transpose();
      Vector c2 = pop.row(tournament()).transpose();
      if (uniform01(rng) < cfg.crossover_rate) detail::sbx_crossover(c1, c2, box, cfg.eta_c, rng);
      detail::polynomial_mutation(c1, box, cfg.mutation_rate, cfg.eta_m, rng);
      detail::polynomial_mutation(c2, box, cfg.mutation_rate, cfg.eta_m, rng);
      offspring.row(k) = c1.transpose();
      offspring.row(k + 1) = c2.transpose();
    }
    const auto off_obj = objective(offspring);

    Matrix combined(2 * n, d);
    combined << pop, offspring;
    std::vector<ObjectivePair> all = obj;
    all.insert(all.end(), off_obj.begin(), off_obj.end());
    const auto all_rank = detail::non_dominated_ranks(all);
    const int fronts = *std::max_element(all_rank.begin(), all_rank.end()) + 1;
    std::vector<std::vector<std::size_t>> members(fronts);
    for (std::size_t i = 0; i < all.size(); ++i) members[all_rank[i]].push_back(i);
    std::vector<double> all_crowd(all.size(), 0.0);

    std::vector<std::size_t> survivors;
    for (auto& front : members) {
      detail::crowding_distance(all, front, all_crowd);
      if (survivors.size() + front.size() <= static_cast<std::size_t>(n)) {
        survivors.insert(survivors.end(), front.begin(), front.end());
        continue;
      }
      std::stable_sort(front.begin(), front.end(), [&](auto a, auto b) { return all_crowd[a] > all_crowd[b]; });
      survivors.insert(survivors.end(), front.begin(), front.begin() + (n - survivors.size()));
      break;
    }
    for (int i = 0; i < n; ++i) {
      pop.row(i) = combined.row(survivors[i]);
      obj[i] = all[survivors[i]];
      rank[i] = all_rank[survivors[i]];
      crowd[i] = all_crowd[survivors[i]];
    }
  }

  const auto keep = non_dominated_filter(obj);
  Matrix front(keep.size(), d);
  std::vector<ObjectivePair> front_obj;
  front_obj.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    front.row(i) = pop.row(keep[i]);
    front_obj.push_back(obj[keep[i]]);
  }
  return {std::move(front), std::move(front_obj)};
}

/// Approximate Pareto set of the model trading off low mean against high variance.
inline std::vector<BiObjectivePoint> nsga2_approximate_front(const GpModel& model, const Box& bounds,
                                                             const Nsga2Config& cfg) {
  const BiObjective objective = [&model](const Matrix& x) {
    Vector mean, var;
    model.posterior(x, mean, var);
    std::vector<ObjectivePair> out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = {mean[i], -var[i]};
    return out;
  };
  const auto [locations, objectives] = nsga2(objective, bounds, cfg);
  std::vector<BiObjectivePoint> front;
  front.reserve(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    front.push_back({locations.row(i).transpose(), objectives[i][0], -objectives[i][1]});
  }
  return front;
}

}  // namespace eshotgun
