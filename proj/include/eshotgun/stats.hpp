#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eshotgun/acquisition.hpp"
#include "eshotgun/types.hpp"

namespace eshotgun {

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty list");
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

/// Linear-interpolated quantile, p in [0, 1].
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ConfigError("quantile of an empty list");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct MedianMad {
  double median = 0.0;
  double mad = 0.0;
};

inline MedianMad median_and_mad(const std::vector<double>& values) {
  const double m = median(values);
  std::vector<double> dev(values.size());
  std::transform(values.begin(), values.end(), dev.begin(), [m](double v) { return std::abs(v - m); });
  return {m, median(dev)};
}

namespace detail {

// Ranks of |d| with ties averaged, doubled so that every rank is an integer.
inline std::vector<long> doubled_abs_ranks(const std::vector<double>& d, std::vector<long>* tie_sizes = nullptr) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long doubled = static_cast<long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    if (tie_sizes) tie_sizes->push_back(static_cast<long>(j - i + 1));
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Largest number of non-zero differences handled by exact enumeration.
inline constexpr std::size_t kWilcoxonExactMax = 20;

/// One-sided paired Wilcoxon signed-rank test of H1: a tends to be smaller than b.
/// Zero differences are dropped and tied |d| ranks averaged. Returns 1 when every
/// difference is zero.
inline double wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("Wilcoxon test needs paired samples of equal length");
  if (a.size() < 5) throw ConfigError("Wilcoxon test needs at least 5 pairs");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  if (d.empty()) return 1.0;

  std::vector<long> ties;
  const std::vector<long> r2 = detail::doubled_abs_ranks(d, &ties);
  long t_obs = 0;  // doubled sum of ranks of positive differences; small under H1
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) t_obs += r2[i];
  }
  const std::size_t n = d.size();

  if (n <= kWilcoxonExactMax) {
    // Counts of sign assignments by doubled positive-rank sum.
    const long total = std::accumulate(r2.begin(), r2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : r2) {
      for (long s = reach; s >= 0; --s) {
        if (count[s] != 0.0) count[s + r] += count[s];
      }
      reach += r;
    }
    double le = 0.0;
    for (long s = 0; s <= t_obs; ++s) le += count[s];
    return std::min(1.0, le / std::ldexp(1.0, static_cast<int>(n)));
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (long t : ties) var -= static_cast<double>(t * t * t - t) / 48.0;
  if (var <= 0.0) return 1.0;
  const double z = (0.5 * static_cast<double>(t_obs) - mean + 0.5) / std::sqrt(var);
  return std::min(1.0, normal_cdf(z));
}

/// Holm step-down rejections, in input order.
inline std::vector<bool> holm_bonferroni(const std::vector<double>& pvalues, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pvalues[i] < pvalues[j]; });
  std::vector<bool> reject(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    if (!(pvalues[order[k]] < alpha / static_cast<double>(m - k))) break;
    reject[order[k]] = true;
  }
  return reject;
}

/// Holm-adjusted p-values: p_adj < alpha exactly when holm_bonferroni rejects.
inline std::vector<double> holm_adjusted(const std::vector<double>& pvalues) {
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pvalues[i] < pvalues[j]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - k) * pvalues[order[k]]));
    adjusted[order[k]] = running;
  }
  return adjusted;
}

struct MethodSample {
  std::string method;
  std::vector<double> final_gaps;  ///< indexed by repeat
};

struct ComparisonRow {
  std::string method;
  double median = 0.0;
  double mad = 0.0;
  double p_adjusted = 1.0;  ///< 1 for the best method itself
  bool best = false;
  bool equivalent = false;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  ///< input order
  double alpha = 0.05;

  const ComparisonRow& best() const {
    return *std::find_if(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.best; });
  }
};

/// Marks the lowest-median method as best (ties broken by name) and every method the
/// best does not significantly beat, after Holm correction, as equivalent.
inline ComparisonTable build_comparison_table(std::vector<MethodSample> samples, double alpha = 0.05) {
  if (samples.size() < 2) throw ConfigError("comparison needs at least two methods");
  const std::size_t n = samples.front().final_gaps.size();
  ComparisonTable table;
  table.alpha = alpha;
  for (auto& s : samples) {
    if (s.final_gaps.size() != n) throw ConfigError("methods have different repeat counts");
    for (double& g : s.final_gaps) g = std::max(g, 0.0);
    const MedianMad mm = median_and_mad(s.final_gaps);
    table.rows.push_back({s.method, mm.median, mm.mad});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const auto& b = table.rows[best];
    if (r.median < b.median || (r.median == b.median && r.method < b.method)) best = i;
  }
  std::vector<double> p;
  std::vector<std::size_t> who;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == best) continue;
    p.push_back(wilcoxon_one_sided(samples[best].final_gaps, samples[i].final_gaps));
    who.push_back(i);
  }
  const std::vector<double> adj = holm_adjusted(p);
  table.rows[best].best = true;
  table.rows[best].equivalent = true;
  for (std::size_t k = 0; k < who.size(); ++k) {
    table.rows[who[k]].p_adjusted = adj[k];
    table.rows[who[k]].equivalent = !(adj[k] < alpha);
  }
  return table;
}

inline void write_table(std::ostream& os, const ComparisonTable& t, char sep = '\t') {
  os << "method" << sep << "median" << sep << "mad" << sep << "p_adjusted" << sep << "best" << sep << "equivalent\n";
  for (const auto& r : t.rows) {
    os << r.method << sep << r.median << sep << r.mad << sep << r.p_adjusted << sep << (r.best ? 1 : 0) << sep
       << (r.equivalent ? 1 : 0) << '\n';
  }
}

inline nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"method", r.method},
                    {"median", r.median},
                    {"mad", r.mad},
                    {"p_adjusted", r.p_adjusted},
                    {"best", r.best},
                    {"equivalent", r.equivalent}});
  }
  return {{"alpha", t.alpha}, {"rows", rows}};
}

}  // namespace eshotgun
