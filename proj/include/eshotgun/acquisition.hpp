#pragma once

#include <cmath>
#include <numbers>

#include "eshotgun/gp.hpp"

namespace eshotgun {

enum class AcquisitionKind { ExpectedImprovement, UpperConfidenceBound, MeanExploit };

struct AcquisitionConfig {
  AcquisitionKind kind = AcquisitionKind::ExpectedImprovement;
  /// UCB exploration weight. The default is a placeholder; it is not tuned.
  double beta = 2.0;
  /// Best observed value f*, used by EI.
  double incumbent = 0.0;
};

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace detail {
inline constexpr double kMinStddev = 1e-12;
}

/// EI for minimisation: (f* - mu) Phi(z) + sigma phi(z), z = (f* - mu) / sigma.
inline double expected_improvement(const Posterior& p, double incumbent) {
  const double sigma = p.stddev();
  const double improvement = incumbent - p.mean;
  if (sigma < detail::kMinStddev) return std::max(improvement, 0.0);
  const double z = improvement / sigma;
  return std::max(improvement * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

/// EI and its gradient from a posterior with gradients.
inline double expected_improvement(const PosteriorGradient& p, double incumbent, Vector& gradient) {
  const double sigma = std::sqrt(std::max(p.variance, 0.0));
  const double improvement = incumbent - p.mean;
  if (sigma < detail::kMinStddev) {
    if (improvement > 0.0) {
      gradient = -p.mean_gradient;
      return improvement;
    }
    gradient = Vector::Zero(p.mean_gradient.size());
    return 0.0;
  }
  const double z = improvement / sigma;
  const double cdf = normal_cdf(z);
  const double pdf = normal_pdf(z);
  // dEI/dmu = -Phi(z), dEI/dsigma = phi(z), dsigma = dvar / (2 sigma)
  gradient = -cdf * p.mean_gradient + pdf / (2.0 * sigma) * p.variance_gradient;
  return std::max(improvement * cdf + sigma * pdf, 0.0);
}

/// Maximised score -mu + beta * sigma (minimisation form of UCB).
inline double upper_confidence_bound(const Posterior& p, double beta) { return -p.mean + beta * p.stddev(); }

inline double mean_exploit_score(const Posterior& p) { return -p.mean; }

inline double acquisition_score(const Posterior& p, const AcquisitionConfig& cfg) {
  switch (cfg.kind) {
    case AcquisitionKind::ExpectedImprovement:
      return expected_improvement(p, cfg.incumbent);
    case AcquisitionKind::UpperConfidenceBound:
      return upper_confidence_bound(p, cfg.beta);
    case AcquisitionKind::MeanExploit:
      return mean_exploit_score(p);
  }
  return 0.0;
}

}  // namespace eshotgun
