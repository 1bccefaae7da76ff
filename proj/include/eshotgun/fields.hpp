#pragma once

#include "eshotgun/acquisition.hpp"
#include "eshotgun/gp.hpp"
#include "eshotgun/inner_opt.hpp"

// Adapters exposing model quantities as ScalarFields for the inner optimiser.
// Every field keeps a pointer to `model`, which must outlive it.

namespace eshotgun {

/// mu(x), with gradient and Hessian.
inline ScalarField mean_field(const GpModel& model, const Box& bounds) {
  const GpModel* m = &model;
  ScalarField f;
  f.bounds = bounds;
  f.value = [m](const Vector& x) { return m->posterior(x).mean; };
  f.value_and_gradient = [m](const Vector& x, Vector& g) {
    g = m->mean_gradient(x);
    return m->posterior(x).mean;
  };
  f.batch_value = [m](const Matrix& x) {
    Vector mean, var;
    m->posterior(x, mean, var);
    return mean;
  };
  f.hessian = [m](const Vector& x) { return m->mean_hessian(x); };
  return f;
}

/// -mu(x); maximising it minimises the posterior mean.
inline ScalarField negated_mean_field(const GpModel& model, const Box& bounds) {
  const GpModel* m = &model;
  ScalarField f;
  f.bounds = bounds;
  f.value = [m](const Vector& x) { return mean_exploit_score(m->posterior(x)); };
  f.value_and_gradient = [m](const Vector& x, Vector& g) {
    g = -m->mean_gradient(x);
    return -m->posterior(x).mean;
  };
  f.batch_value = [m](const Matrix& x) {
    Vector mean, var;
    m->posterior(x, mean, var);
    return Vector(-mean);
  };
  f.hessian = [m](const Vector& x) { return Matrix(-m->mean_hessian(x)); };
  return f;
}

inline ScalarField expected_improvement_field(const GpModel& model, const Box& bounds, double incumbent) {
  const GpModel* m = &model;
  ScalarField f;
  f.bounds = bounds;
  f.value = [m, incumbent](const Vector& x) { return expected_improvement(m->posterior(x), incumbent); };
  f.value_and_gradient = [m, incumbent](const Vector& x, Vector& g) {
    return expected_improvement(m->posterior_with_gradient(x), incumbent, g);
  };
  f.batch_value = [m, incumbent](const Matrix& x) {
    Vector mean, var;
    m->posterior(x, mean, var);
    Vector ei(x.rows());
    for (Eigen::Index i = 0; i < ei.size(); ++i) ei[i] = expected_improvement(Posterior{mean[i], var[i]}, incumbent);
    return ei;
  };
  return f;
}

inline ScalarField upper_confidence_bound_field(const GpModel& model, const Box& bounds, double beta) {
  const GpModel* m = &model;
  ScalarField f;
  f.bounds = bounds;
  f.value = [m, beta](const Vector& x) { return upper_confidence_bound(m->posterior(x), beta); };
  return f;
}

}  // namespace eshotgun
