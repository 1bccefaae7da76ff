#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "eshotgun/acquisition.hpp"
#include "eshotgun/fields.hpp"
#include "eshotgun/gp.hpp"
#include "eshotgun/inner_opt.hpp"
#include "eshotgun/pareto.hpp"
#include "eshotgun/random.hpp"

namespace eshotgun {

/// How the epsilon-greedy anchor is chosen on exploration steps.
enum class SelectionMode { RandomSpace, ParetoFront, PureExploit };

/// Whether the uncertainty term of a radius uses sigma or sigma^2.
enum class RadiusForm { StdDev, Variance };

struct ShotgunConfig {
  double epsilon = 0.1;
  double gamma = 1.0;
  int batch_size = 10;
  SelectionMode mode = SelectionMode::RandomSpace;
  /// Gaussian draws tried before the truncated-box fallback; 0 means 100 * batch_size.
  int max_rejection_attempts = 0;
  RadiusForm radius_form = RadiusForm::StdDev;

  int rejection_cap() const { return max_rejection_attempts > 0 ? max_rejection_attempts : 100 * batch_size; }

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

struct BatchProposal {
  Matrix locations;  ///< q x d
  Vector anchor;     ///< first location
  double radius = 0.0;
  double lipschitz = 0.0;
  bool explored = false;      ///< anchor came from an epsilon exploration step
  bool used_fallback = false; ///< rejection sampling ran out of attempts

  int size() const { return static_cast<int>(locations.rows()); }
};

/// Settings shared by the inner searches of every strategy.
struct InnerSearchSettings {
  /// Evaluations per inner maximisation, per input dimension.
  long evaluations_per_dim = 10000;
  int restarts = 10;
  int nsga2_generations = 50;
  /// Thompson candidates: min(per_dim * d, cap).
  int ts_candidates_per_dim = 1000;
  int ts_candidates_cap = 2000;
  int presample_points = 3000;
  int presample_refine = 5;

  SearchBudget budget(int d, std::uint64_t seed) const {
    return SearchBudget{std::max<long>(100, evaluations_per_dim * d), restarts, seed};
  }
  int ts_candidates(int d) const { return std::max(1, std::min(ts_candidates_per_dim * d, ts_candidates_cap)); }
};

/// Lower bound for Lipschitz estimates: 1e-7 * (observed output range) / (box diagonal).
inline double lipschitz_floor(const GpModel& model, const Box& bounds) {
  const Vector& f = model.dataset().values;
  const double range = std::max(f.maxCoeff() - f.minCoeff(), 1e-12);
  return 1e-7 * range / bounds.diagonal();
}

inline double min_radius(const Box& bounds) { return 1e-6 * bounds.diagonal(); }

/// Sampling radius of the shotgun: |mu(x1) - f*| / L + gamma * sigma(x1) / L.
inline double shotgun_radius(const GpModel& model, const Vector& x1, double incumbent, double lipschitz,
                             double gamma, const Box& bounds, RadiusForm form = RadiusForm::StdDev) {
  const Posterior p = model.posterior(x1);
  const double spread = form == RadiusForm::StdDev ? p.stddev() : p.variance;
  const double r = std::abs(p.mean - incumbent) / lipschitz + gamma * spread / lipschitz;
  return std::max(r, min_radius(bounds));
}

/// Penalisation radius: |mu(xj) - f*| / L + gamma * sigma^2(xj) / L.
inline double penalisation_radius(const GpModel& model, const Vector& xj, double incumbent, double lipschitz,
                                  double gamma, const Box& bounds) {
  const Posterior p = model.posterior(xj);
  const double r = std::abs(p.mean - incumbent) / lipschitz + gamma * p.variance / lipschitz;
  return std::max(r, min_radius(bounds));
}

enum class PenaliserKind { Soft, Hard };

/// Soft: 1 - exp(-d^2 / (2 r^2)). Hard: min(1, d / r). Writes the gradient when asked.
inline double penaliser(PenaliserKind kind, const Vector& x, const Vector& centre, double radius,
                        Vector* gradient = nullptr) {
  const Vector delta = x - centre;
  const double dist = delta.norm();
  if (kind == PenaliserKind::Soft) {
    const double e = std::exp(-0.5 * dist * dist / (radius * radius));
    if (gradient) *gradient = e / (radius * radius) * delta;
    return 1.0 - e;
  }
  if (dist >= radius) {
    if (gradient) *gradient = Vector::Zero(x.size());
    return 1.0;
  }
  if (gradient) *gradient = dist > 0.0 ? Vector(delta / (dist * radius)) : Vector(Vector::Zero(x.size()));
  return dist / radius;
}

/// Global minimiser of the posterior mean found by the inner optimiser.
inline Vector minimise_mean(const GpModel& model, const Box& bounds, const SearchBudget& budget) {
  return global_maximize(negated_mean_field(model, bounds), budget).location;
}

namespace detail {

// Moves x by about sqrt(jitter) lengthscales in a random direction pointing into
// the box. The step length is randomised too, so repeated perturbations of the
// same point stay distinct in one dimension.
inline Vector perturb_location(const GpModel& model, const Vector& x, const Box& bounds, Rng& rng) {
  Vector dir(x.size());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = standard_normal(rng);
  const Vector centre = bounds.centre();
  for (Eigen::Index i = 0; i < dir.size(); ++i) {
    if ((centre[i] - x[i]) * dir[i] < 0.0) dir[i] = -dir[i];
  }
  dir.normalize();
  const double step = (0.5 + uniform01(rng)) * std::sqrt(std::max(model.hyperparams().jitter, 1e-12));
  return bounds.clip(x + step * model.lengthscales().cwiseProduct(dir));
}

inline bool near_any(const Vector& x, const std::vector<Vector>& others, const GpModel& model, double tol) {
  const Vector z = model.scaling().to_model(x);
  for (const auto& o : others) {
    if ((model.scaling().to_model(o) - z).norm() <= tol) return true;
  }
  const Matrix zs = model.scaling().to_model(model.dataset().inputs);
  return ((zs.rowwise() - z.transpose()).rowwise().norm().array() <= tol).any();
}

inline Matrix stack_rows(const std::vector<Vector>& rows, int d) {
  Matrix out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = rows[i].transpose();
  return out;
}

}  // namespace detail

/// epsilon-shotgun batch: an epsilon-greedy anchor plus q - 1 Gaussian samples around it.
inline BatchProposal eshotgun_select(const GpModel& model, const ShotgunConfig& cfg, const Box& bounds, Rng& rng,
                                     const InnerSearchSettings& inner = {}) {
  cfg.validate();
  const int d = bounds.dim();
  BatchProposal out;

  const double u = uniform01(rng);
  out.explored = cfg.mode != SelectionMode::PureExploit && u < cfg.epsilon;
  if (out.explored && cfg.mode == SelectionMode::RandomSpace) {
    out.anchor = uniform_in(bounds, rng);
  } else if (out.explored && cfg.mode == SelectionMode::ParetoFront) {
    Nsga2Config nsga = Nsga2Config::for_dimension(d, rng());
    nsga.generations = inner.nsga2_generations;
    const auto front = nsga2_approximate_front(model, bounds, nsga);
    out.anchor = front[uniform_index(front.size(), rng)].location;
  } else {
    out.anchor = minimise_mean(model, bounds, inner.budget(d, rng()));
  }

  const ScalarField mu = mean_field(model, bounds);
  out.lipschitz = estimate_local_lipschitz(mu, out.anchor, model.lengthscales(), lipschitz_floor(model, bounds),
                                           inner.budget(d, rng()));
  out.radius = shotgun_radius(model, out.anchor, model.incumbent(), out.lipschitz, cfg.gamma, bounds,
                              cfg.radius_form);

  std::vector<Vector> points{out.anchor};
  int attempts = 0;
  while (static_cast<int>(points.size()) < cfg.batch_size && attempts < cfg.rejection_cap()) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x[i] = out.anchor[i] + out.radius * standard_normal(rng);
    ++attempts;
    if (bounds.contains(x)) points.push_back(std::move(x));
  }
  if (static_cast<int>(points.size()) < cfg.batch_size) {
    out.used_fallback = true;
    const Box region = bounds.around(out.anchor, Vector::Constant(d, 3.0 * out.radius));
    while (static_cast<int>(points.size()) < cfg.batch_size) points.push_back(uniform_in(region, rng));
  }
  out.locations = detail::stack_rows(points, d);
  return out;
}

/// Kriging Believer: repeatedly maximise EI and hallucinate the posterior mean there.
inline BatchProposal kriging_believer_select(const GpModel& model, int q, double incumbent, const Box& bounds,
                                             const SearchBudget& budget) {
  if (q < 1) throw ConfigError("batch size must be >= 1");
  Rng rng(derive_seed(budget.rng_seed, 0, 7));
  GpModel current = model;
  // Believed values below the incumbent become the new target, otherwise EI at a
  // believed improvement stays positive and the same point is picked again.
  double target = incumbent;
  std::vector<Vector> points;
  for (int i = 0; i < q; ++i) {
    SearchBudget b = budget;
    b.rng_seed = derive_seed(budget.rng_seed, i, 1);
    Vector x = global_maximize(expected_improvement_field(current, bounds, target), b).location;
    double believed = current.posterior(x).mean;
    try {
      current = current.hallucinate(x, believed);
    } catch (const DuplicateLocation&) {
      x = detail::perturb_location(current, x, bounds, rng);
      believed = current.posterior(x).mean;
      current = current.hallucinate(x, believed);
    }
    target = std::min(target, believed);
    points.push_back(std::move(x));
  }
  BatchProposal out;
  out.locations = detail::stack_rows(points, bounds.dim());
  out.anchor = points.front();
  return out;
}

/// Local penalisation. Soft uses a global Lipschitz estimate and gamma = 0;
/// Hard estimates L locally around each selected point and uses gamma = 1.
inline BatchProposal local_penalisation_select(const GpModel& model, int q, PenaliserKind mode, const Box& bounds,
                                               Rng& rng, const InnerSearchSettings& inner = {}) {
  if (q < 1) throw ConfigError("batch size must be >= 1");
  const int d = bounds.dim();
  const double incumbent = model.incumbent();
  const double floor = lipschitz_floor(model, bounds);
  const ScalarField mu = mean_field(model, bounds);
  const ScalarField ei = expected_improvement_field(model, bounds, incumbent);
  const double gamma = mode == PenaliserKind::Soft ? 0.0 : 1.0;

  std::optional<double> global_lipschitz;
  if (mode == PenaliserKind::Soft) global_lipschitz = estimate_lipschitz(mu, bounds, floor, inner.budget(d, rng()));

  std::vector<Vector> centres;
  std::vector<double> radii;
  BatchProposal out;
  for (int i = 0; i < q; ++i) {
    ScalarField field = ei;
    if (!centres.empty()) {
      field.value = [&](const Vector& x) {
        double v = ei.value(x);
        for (std::size_t j = 0; j < centres.size(); ++j) v *= penaliser(mode, x, centres[j], radii[j]);
        return v;
      };
      field.value_and_gradient = [&](const Vector& x, Vector& g) {
        Vector ge;
        const double e = ei.value_and_gradient(x, ge);
        std::vector<double> phi(centres.size());
        std::vector<Vector> dphi(centres.size());
        double prod = 1.0;
        for (std::size_t j = 0; j < centres.size(); ++j) {
          phi[j] = penaliser(mode, x, centres[j], radii[j], &dphi[j]);
          prod *= phi[j];
        }
        g = prod * ge;
        for (std::size_t j = 0; j < centres.size(); ++j) {
          double others = e;
          for (std::size_t k = 0; k < centres.size(); ++k) {
            if (k != j) others *= phi[k];
          }
          g += others * dphi[j];
        }
        return e * prod;
      };
      field.batch_value = [&](const Matrix& x) {
        Vector v = ei.batch_value(x);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          for (std::size_t j = 0; j < centres.size(); ++j) {
            v[r] *= penaliser(mode, x.row(r).transpose(), centres[j], radii[j]);
          }
        }
        return v;
      };
    }
    const auto best =
        presample_then_refine(field, inner.presample_points, inner.presample_refine, inner.budget(d, rng()));
    Vector x = best.location;
    if (detail::near_any(x, centres, model, 1e-9)) x = detail::perturb_location(model, x, bounds, rng);
    const double lipschitz = global_lipschitz
                                 ? *global_lipschitz
                                 : estimate_local_lipschitz(mu, x, model.lengthscales(), floor, inner.budget(d, rng()));
    if (i == 0) out.lipschitz = lipschitz;
    radii.push_back(penalisation_radius(model, x, incumbent, lipschitz, gamma, bounds));
    centres.push_back(std::move(x));
  }
  out.locations = detail::stack_rows(centres, d);
  out.anchor = centres.front();
  return out;
}

/// Row index of the minimum of one joint posterior draw over `candidates`.
inline Eigen::Index thompson_pick(const GpModel& model, const Matrix& candidates, Rng& rng) {
  const Vector draw = model.sample_joint_posterior(candidates, rng);
  Eigen::Index idx = 0;
  draw.minCoeff(&idx);
  return idx;
}

/// Thompson sampling: each slot minimises an independent posterior realisation over
/// fresh uniform candidates.
inline BatchProposal thompson_select(const GpModel& model, int q, int n_candidates, const Box& bounds, Rng& rng) {
  if (q < 1 || n_candidates < q) throw ConfigError("Thompson sampling needs n_candidates >= q >= 1");
  std::vector<Vector> points;
  for (int slot = 0; slot < q; ++slot) {
    const Matrix candidates = uniform_in(bounds, n_candidates, rng);
    Vector x = candidates.row(thompson_pick(model, candidates, rng)).transpose();
    if (detail::near_any(x, points, model, 1e-9)) x = detail::perturb_location(model, x, bounds, rng);
    points.push_back(std::move(x));
  }
  BatchProposal out;
  out.locations = detail::stack_rows(points, bounds.dim());
  out.anchor = points.front();
  return out;
}

}  // namespace eshotgun
