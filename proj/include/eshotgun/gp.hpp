#pragma once

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>

#include "eshotgun/random.hpp"
#include "eshotgun/types.hpp"

namespace eshotgun {

/// Observed locations (one per row) and their objective values.
struct Dataset {
  Matrix inputs;
  Vector values;

  Dataset() = default;
  Dataset(Matrix x, Vector f) : inputs(std::move(x)), values(std::move(f)) {
    if (inputs.rows() != values.size()) throw ConfigError("dataset inputs/values size mismatch");
  }

  int size() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  bool empty() const { return inputs.rows() == 0; }

  void append(const Vector& x, double f) {
    if (empty() && inputs.cols() == 0) inputs.resize(0, x.size());
    const Eigen::Index m = inputs.rows();
    inputs.conservativeResize(m + 1, Eigen::NoChange);
    values.conservativeResize(m + 1);
    inputs.row(m) = x.transpose();
    values[m] = f;
  }

  double min_value() const { return values.minCoeff(); }

  Eigen::Index argmin() const {
    Eigen::Index i = 0;
    values.minCoeff(&i);
    return i;
  }

  /// Index of the first input within `tol` (Euclidean) of x, or -1.
  Eigen::Index find_near(const Vector& x, double tol) const {
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      if ((inputs.row(i).transpose() - x).norm() <= tol) return i;
    }
    return -1;
  }

  double min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < inputs.rows(); ++j) {
        best = std::min(best, (inputs.row(i) - inputs.row(j)).norm());
      }
    }
    return best;
  }

  void validate(const Box& bounds) const {
    if (size() < 1) throw ConfigError("dataset must hold at least one observation");
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      if (!bounds.contains(inputs.row(i).transpose())) throw OutOfBounds("dataset input outside bounds");
    }
    if (!(min_pairwise_distance() > 0.0)) throw DuplicateLocation("dataset inputs are not pairwise distinct");
  }
};

struct GpHyperparams {
  double lengthscale = 1.0;
  double signal_variance = 1.0;
  /// Diagonal jitter, relative to the signal variance: K + jitter * signal_variance * I.
  double jitter = 1e-6;

  bool valid() const {
    return std::isfinite(lengthscale) && std::isfinite(signal_variance) && lengthscale > 0.0 &&
           signal_variance > 0.0 && jitter >= 0.0;
  }
  double noise_variance() const { return jitter * signal_variance; }
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;

  double stddev() const { return std::sqrt(std::max(variance, 0.0)); }
};

struct PosteriorGradient {
  double mean = 0.0;
  double variance = 0.0;
  Vector mean_gradient;
  Vector variance_gradient;
};

// Isotropic Matern 5/2 in terms of the distance r.
namespace matern52 {

inline double value_at(double r, const GpHyperparams& hp) {
  const double a = std::sqrt(5.0) * r / hp.lengthscale;
  return hp.signal_variance * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

/// grad_x k(x, x') = gradient_weight(r) * (x - x'); smooth at r = 0.
inline double gradient_weight(double r, const GpHyperparams& hp) {
  const double c = std::sqrt(5.0) / hp.lengthscale;
  const double a = c * r;
  return -hp.signal_variance * c * c / 3.0 * (1.0 + a) * std::exp(-a);
}

/// hess_x k(x, x') = gradient_weight(r) * I + hessian_weight(r) * (x - x')(x - x')^T.
inline double hessian_weight(double r, const GpHyperparams& hp) {
  const double c = std::sqrt(5.0) / hp.lengthscale;
  return hp.signal_variance * c * c * c * c / 3.0 * std::exp(-c * r);
}

}  // namespace matern52

inline double kernel(const Vector& x, const Vector& x2, const GpHyperparams& hp) {
  return matern52::value_at((x - x2).norm(), hp);
}

inline Matrix kernel_matrix(const Matrix& a, const Matrix& b, const GpHyperparams& hp) {
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = matern52::value_at((a.row(i) - b.row(j)).norm(), hp);
    }
  }
  return k;
}

inline Matrix kernel_matrix(const Matrix& a, const GpHyperparams& hp) {
  const Eigen::Index m = a.rows();
  Matrix k(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    k(j, j) = hp.signal_variance;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      k(i, j) = k(j, i) = matern52::value_at((a.row(i) - a.row(j)).norm(), hp);
    }
  }
  return k;
}

namespace detail {

inline constexpr double kMaxJitter = 1e-2;
inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Cholesky of `k + jitter * scale * I`, escalating jitter x10 up to kMaxJitter.
/// Returns the jitter actually used, or nullopt if every level failed.
inline std::optional<double> factorise_with_jitter(const Matrix& k, double scale, double jitter, Matrix& lower) {
  // Only the lower triangle of k is read.
  double level = jitter;
  for (;;) {
    lower = k;
    lower.diagonal().array() += level * scale;
    Eigen::LLT<Eigen::Ref<Matrix>> llt(lower);
    if (llt.info() == Eigen::Success && lower.diagonal().minCoeff() > 0.0) {
      lower.triangularView<Eigen::StrictlyUpper>().setZero();
      return level;
    }
    if (level >= kMaxJitter) return std::nullopt;
    level = level > 0.0 ? std::min(level * 10.0, kMaxJitter) : 1e-10;
  }
}

}  // namespace detail

/// log p(f | X, hp) for a zero-mean GP with K + jitter*signal_variance*I; no input or output rescaling.
inline double log_marginal_likelihood(const Dataset& ds, const GpHyperparams& hp) {
  Matrix k = kernel_matrix(ds.inputs, hp);
  k.diagonal().array() += hp.noise_variance();
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    throw FactorisationFailure("kernel matrix is not positive definite; increase jitter");
  }
  const Vector alpha = llt.solve(ds.values);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * log_det - 0.5 * ds.values.dot(alpha) - 0.5 * ds.size() * detail::kLog2Pi;
}

/// Search box for hyperparameter fitting (natural units; searched in log space).
struct HyperparameterBounds {
  double lengthscale_min = 1e-2;
  double lengthscale_max = 10.0;
  double signal_variance_min = 1e-3;
  double signal_variance_max = 1e3;

  /// lengthscale in [1e-2, 10] x box diagonal; signal variance in [1e-3, 1e3] x var(f), floored at 1e-8.
  static HyperparameterBounds for_data(const Dataset& ds, double box_diagonal) {
    const double mean = ds.values.mean();
    const double var = ds.size() > 0 ? (ds.values.array() - mean).square().mean() : 0.0;
    HyperparameterBounds b;
    b.lengthscale_min = 1e-2 * box_diagonal;
    b.lengthscale_max = 10.0 * box_diagonal;
    b.signal_variance_min = std::max(1e-3 * var, 1e-8);
    b.signal_variance_max = std::max(1e3 * var, 1e-8);
    return b;
  }
};

namespace detail {

struct ProfiledFit {
  double log_likelihood = -std::numeric_limits<double>::infinity();
  GpHyperparams hp;
};

// For a fixed lengthscale the optimal signal variance has a closed form because
// the jitter is proportional to it: K = s2 * (R + jitter * I).
inline ProfiledFit profile_signal_variance(const Dataset& ds, double lengthscale, double jitter,
                                           const HyperparameterBounds& bounds) {
  ProfiledFit out;
  GpHyperparams unit{lengthscale, 1.0, jitter};
  const Matrix r = kernel_matrix(ds.inputs, unit);
  Matrix lower;
  const auto used = factorise_with_jitter(r, 1.0, jitter, lower);
  if (!used) return out;
  const Vector v = lower.triangularView<Eigen::Lower>().solve(ds.values);
  const double quad = v.squaredNorm();
  const double log_det_r = 2.0 * lower.diagonal().array().log().sum();
  const double m = ds.size();
  const double s2 =
      std::clamp(quad / m, bounds.signal_variance_min, bounds.signal_variance_max);
  out.log_likelihood = -0.5 * (m * std::log(s2) + log_det_r) - 0.5 * quad / s2 - 0.5 * m * kLog2Pi;
  out.hp = GpHyperparams{lengthscale, s2, *used};
  return out;
}

}  // namespace detail

/// Maximises the log marginal likelihood over (lengthscale, signal variance).
///
/// Each restart is a bounded local ascent in log-lengthscale space with the signal
/// variance profiled out exactly (it is clamped to its bounds, where the profile is
/// concave in log space). The first start is `warm_start` when given; the others are
/// uniform in log space. Returns the best evaluated point over all restarts.
inline GpHyperparams fit_hyperparameters(const Dataset& ds, int restarts, const HyperparameterBounds& bounds,
                                         Rng& rng, const std::optional<GpHyperparams>& warm_start = std::nullopt,
                                         double jitter = 1e-6) {
  if (ds.size() < 2) throw ConfigError("hyperparameter fitting needs at least two observations");
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  const double lo = std::log(bounds.lengthscale_min);
  const double hi = std::log(bounds.lengthscale_max);

  detail::ProfiledFit best;
  auto evaluate = [&](double s) {
    s = std::clamp(s, lo, hi);
    const auto fit = detail::profile_signal_variance(ds, std::exp(s), jitter, bounds);
    if (fit.log_likelihood > best.log_likelihood) best = fit;
    return fit.log_likelihood;
  };

  const double span = hi - lo;
  for (int restart = 0; restart < restarts; ++restart) {
    double s0;
    if (restart == 0 && warm_start) {
      s0 = std::clamp(std::log(warm_start->lengthscale), lo, hi);
    } else {
      s0 = lo + span * uniform01(rng);
    }
    const double f0 = evaluate(s0);
    if (!std::isfinite(f0)) continue;

    // Bracket a local maximum by stepping uphill with doubling steps.
    double step = 0.05 * span;
    const double left = std::max(lo, s0 - step);
    const double right = std::min(hi, s0 + step);
    const double f_left = evaluate(left);
    const double f_right = evaluate(right);
    double a = left;
    double b = right;
    if (f_left > f0 || f_right > f0) {
      const double dir = f_right >= f_left ? 1.0 : -1.0;
      double behind = dir > 0 ? left : right;
      double before = s0;
      double f_before = f0;
      double current = dir > 0 ? right : left;
      double f_current = dir > 0 ? f_right : f_left;
      while (f_current > f_before && current > lo && current < hi) {
        step *= 2.0;
        const double next = std::clamp(current + dir * step, lo, hi);
        behind = before;
        before = current;
        f_before = f_current;
        current = next;
        f_current = evaluate(next);
      }
      a = std::min(behind, current);
      b = std::max(behind, current);
    }
    if (b - a > 1e-9) {
      auto negated = [&](double s) {
        const double v = evaluate(s);
        return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
      };
      std::uintmax_t iters = 60;
      boost::math::tools::brent_find_minima(negated, a, b, 24, iters);
    }
  }
  if (!std::isfinite(best.log_likelihood)) {
    throw AllRestartsFailed("no hyperparameter restart produced a factorisable kernel matrix");
  }
  return best.hp;
}

/// Affine maps between problem units and the space the GP is fitted in.
struct Scaling {
  Vector input_offset;
  Vector input_scale;
  double output_offset = 0.0;
  double output_scale = 1.0;

  static Scaling identity(int d) { return Scaling{Vector::Zero(d), Vector::Ones(d), 0.0, 1.0}; }

  /// Inputs mapped to the unit hypercube of `bounds`; outputs optionally standardised.
  static Scaling for_data(const Dataset& ds, const Box& bounds, bool standardise) {
    if (!standardise) return identity(bounds.dim());
    Scaling s{bounds.lower, bounds.width(), 0.0, 1.0};
    const double mean = ds.values.mean();
    const double sd = std::sqrt((ds.values.array() - mean).square().mean());
    s.output_offset = mean;
    s.output_scale = sd > 1e-12 * (1.0 + std::abs(mean)) ? sd : 1.0;
    return s;
  }

  Vector to_model(const Vector& x) const { return (x - input_offset).cwiseQuotient(input_scale); }
  Matrix to_model(const Matrix& x) const {
    Matrix z = x.rowwise() - input_offset.transpose();
    return z.array().rowwise() / input_scale.transpose().array();
  }
  Vector values_to_model(const Vector& f) const {
    return (f.array() - output_offset) / output_scale;
  }
};

struct GpFitOptions {
  int restarts = 10;
  /// Rescale inputs to the unit cube and standardise outputs before fitting.
  bool standardise = true;
  double jitter = 1e-6;
  /// Model-space hyperparameters of a previous fit, used as the first restart.
  std::optional<GpHyperparams> warm_start;
};

/// Exact zero-mean GP with an isotropic Matern 5/2 kernel.
///
/// All public queries take and return problem units; internally the model works on
/// the scaled data given by `scaling()`. Instances are immutable.
class GpModel {
 public:
  GpModel(Dataset data, GpHyperparams hp) : GpModel(std::move(data), hp, Scaling::identity(0)) {}

  GpModel(Dataset data, GpHyperparams hp, Scaling scaling)
      : data_(std::move(data)), hp_(hp), scaling_(std::move(scaling)) {
    if (data_.size() < 1) throw ConfigError("GP needs at least one observation");
    if (!hp_.valid()) throw ConfigError("invalid GP hyperparameters");
    if (scaling_.input_scale.size() == 0) scaling_ = Scaling::identity(data_.dim());
    z_ = scaling_.to_model(data_.inputs);
    y_ = scaling_.values_to_model(data_.values);
    factorise();
  }

  static GpModel fit(const Dataset& data, const Box& bounds, const GpFitOptions& options, Rng& rng) {
    Scaling scaling = Scaling::for_data(data, bounds, options.standardise);
    const Dataset scaled(scaling.to_model(data.inputs), scaling.values_to_model(data.values));
    const double diag = options.standardise ? std::sqrt(static_cast<double>(bounds.dim())) : bounds.diagonal();
    const auto box = HyperparameterBounds::for_data(scaled, diag);
    const GpHyperparams hp = fit_hyperparameters(scaled, options.restarts, box, rng, options.warm_start, options.jitter);
    return GpModel(data, hp, std::move(scaling));
  }

  const Dataset& dataset() const { return data_; }
  const GpHyperparams& hyperparams() const { return hp_; }
  const Scaling& scaling() const { return scaling_; }
  int dim() const { return data_.dim(); }
  int size() const { return data_.size(); }
  double incumbent() const { return data_.min_value(); }

  /// Prior variance in problem output units.
  double signal_variance() const { return hp_.signal_variance * square(scaling_.output_scale); }

  /// Lengthscale expressed per input dimension in problem units.
  Vector lengthscales() const { return hp_.lengthscale * scaling_.input_scale; }

  Posterior posterior(const Vector& x) const {
    const Vector z = scaling_.to_model(x);
    const Vector k = cross_covariance(z);
    const double mean = k.dot(alpha_);
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
    const double var = std::max(hp_.signal_variance - v.squaredNorm(), 0.0);
    return {to_output(mean), var * square(scaling_.output_scale)};
  }

  /// Batched posterior at the rows of `x`.
  void posterior(const Matrix& x, Vector& mean, Vector& variance) const {
    const Matrix z = scaling_.to_model(x);
    const Matrix ks = kernel_matrix(z_, z, hp_);  // M x N
    mean = (ks.transpose() * alpha_).array() * scaling_.output_scale + scaling_.output_offset;
    const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks);
    variance = (hp_.signal_variance - v.colwise().squaredNorm().transpose().array())
                   .cwiseMax(0.0) *
               square(scaling_.output_scale);
  }

  PosteriorGradient posterior_with_gradient(const Vector& x) const {
    const Vector z = scaling_.to_model(x);
    const Eigen::Index m = z_.rows();
    const int d = dim();
    Vector k(m);
    Matrix jac(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vector delta = z - z_.row(i).transpose();
      const double r = delta.norm();
      k[i] = matern52::value_at(r, hp_);
      jac.row(i) = matern52::gradient_weight(r, hp_) * delta.transpose();
    }
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
    const Vector w = chol_.transpose().triangularView<Eigen::Upper>().solve(v);
    const double s = scaling_.output_scale;
    PosteriorGradient out;
    out.mean = to_output(k.dot(alpha_));
    out.mean_gradient = s * (jac.transpose() * alpha_).cwiseQuotient(scaling_.input_scale);
    const double var = hp_.signal_variance - v.squaredNorm();
    if (var > 0.0) {
      out.variance = var * s * s;
      out.variance_gradient = -2.0 * s * s * (jac.transpose() * w).cwiseQuotient(scaling_.input_scale);
    } else {
      out.variance = 0.0;
      out.variance_gradient = Vector::Zero(d);
    }
    return out;
  }

  Vector mean_gradient(const Vector& x) const {
    const Vector z = scaling_.to_model(x);
    Vector g = Vector::Zero(dim());
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      const Vector delta = z - z_.row(i).transpose();
      g += alpha_[i] * matern52::gradient_weight(delta.norm(), hp_) * delta;
    }
    return scaling_.output_scale * g.cwiseQuotient(scaling_.input_scale);
  }

  Matrix mean_hessian(const Vector& x) const {
    const Vector z = scaling_.to_model(x);
    const int d = dim();
    Matrix h = Matrix::Zero(d, d);
    double diag = 0.0;
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      const Vector delta = z - z_.row(i).transpose();
      const double r = delta.norm();
      diag += alpha_[i] * matern52::gradient_weight(r, hp_);
      h.noalias() += (alpha_[i] * matern52::hessian_weight(r, hp_)) * delta * delta.transpose();
    }
    h.diagonal().array() += diag;
    const Vector inv = scaling_.input_scale.cwiseInverse();
    return scaling_.output_scale * inv.asDiagonal() * h * inv.asDiagonal();
  }

  /// Model over the data augmented with (x, value), keeping hyperparameters and scaling.
  /// `tolerance` is a distance in the scaled input space.
  GpModel hallucinate(const Vector& x, double value, double tolerance = 1e-9) const {
    const Vector z = scaling_.to_model(x);
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      if ((z_.row(i).transpose() - z).norm() <= tolerance) {
        throw DuplicateLocation("hallucinated location duplicates an existing input");
      }
    }
    GpModel out = *this;
    out.data_.append(x, value);
    const Eigen::Index m = z_.rows();
    out.z_.conservativeResize(m + 1, Eigen::NoChange);
    out.z_.row(m) = z.transpose();
    out.y_.conservativeResize(m + 1);
    out.y_[m] = (value - scaling_.output_offset) / scaling_.output_scale;

    // Rank-one extension of the Cholesky factor.
    const Vector k = cross_covariance(z);
    const Vector l = chol_.triangularView<Eigen::Lower>().solve(k);
    const double pivot = hp_.signal_variance + hp_.noise_variance() - l.squaredNorm();
    if (pivot > 1e-14 * hp_.signal_variance) {
      out.chol_.conservativeResize(m + 1, m + 1);
      out.chol_.col(m).setZero();
      out.chol_.row(m).head(m) = l.transpose();
      out.chol_(m, m) = std::sqrt(pivot);
      out.solve_weights(kernel_matrix(out.z_, hp_));
    } else {
      out.factorise();
    }
    return out;
  }

  /// Posterior mean vector and covariance matrix over the rows of `x`, in problem units.
  std::pair<Vector, Matrix> joint_posterior(const Matrix& x) const {
    const Matrix z = scaling_.to_model(x);
    const Matrix ks = kernel_matrix(z_, z, hp_);
    const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks);
    Matrix cov = kernel_matrix(z, hp_);
    cov.noalias() -= v.transpose() * v;
    const double s = scaling_.output_scale;
    Vector mean = (ks.transpose() * alpha_).array() * s + scaling_.output_offset;
    return {std::move(mean), cov * (s * s)};
  }

  /// One draw from the joint posterior over the rows of `x`. The covariance is
  /// stabilised with escalating diagonal jitter (relative to the signal variance).
  Vector sample_joint_posterior(const Matrix& x, Rng& rng) const {
    const Matrix z = scaling_.to_model(x);
    const Matrix ks = kernel_matrix(z_, z, hp_);
    const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks);
    Matrix cov = kernel_matrix(z, hp_);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(v.transpose(), -1.0);
    Matrix lower;
    const double start = hp_.jitter > 0.0 ? hp_.jitter : 1e-10;
    if (!detail::factorise_with_jitter(cov, hp_.signal_variance, start, lower)) {
      throw FactorisationFailure("joint posterior covariance could not be stabilised");
    }
    Vector normals(x.rows());
    for (Eigen::Index i = 0; i < normals.size(); ++i) normals[i] = standard_normal(rng);
    const Vector draw = ks.transpose() * alpha_ + lower.triangularView<Eigen::Lower>() * normals;
    return draw.array() * scaling_.output_scale + scaling_.output_offset;
  }

 private:
  static double square(double v) { return v * v; }
  double to_output(double model_value) const {
    return model_value * scaling_.output_scale + scaling_.output_offset;
  }

  Vector cross_covariance(const Vector& z) const {
    Vector k(z_.rows());
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      k[i] = matern52::value_at((z_.row(i).transpose() - z).norm(), hp_);
    }
    return k;
  }

  void factorise() {
    const Matrix k = kernel_matrix(z_, hp_);
    const auto used = detail::factorise_with_jitter(k, hp_.signal_variance, hp_.jitter, chol_);
    if (!used) throw FactorisationFailure("GP kernel matrix is not positive definite at maximum jitter");
    hp_.jitter = *used;
    solve_weights(k);
  }

  // Mean weights solve the noiseless system K alpha = y through a truncated
  // eigendecomposition; the jittered factor is kept for variances only. This
  // keeps training points interpolated to well below the jitter level.
  void solve_weights(const Matrix& k) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    const Vector& lambda = es.eigenvalues();
    const double cut = kPinvRcond * lambda.maxCoeff();
    Vector proj = es.eigenvectors().transpose() * y_;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) proj[i] = lambda[i] > cut ? proj[i] / lambda[i] : 0.0;
    alpha_ = es.eigenvectors() * proj;
  }
  static constexpr double kPinvRcond = 1e-13;


  Dataset data_;
  GpHyperparams hp_;
  Scaling scaling_;
  Matrix z_;
  Vector y_;
  Matrix chol_;
  Vector alpha_;
};

}  // namespace eshotgun
