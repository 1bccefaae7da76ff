#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "eshotgun/benchmarks.hpp"
#include "eshotgun/design.hpp"
#include "eshotgun/gp.hpp"
#include "eshotgun/random.hpp"
#include "eshotgun/stats.hpp"
#include "eshotgun/strategies.hpp"

namespace eshotgun {

enum class Method { EsRs, EsPf, Es0, Kb, Lp, Playbook, Ts };

inline const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> names{
      {Method::EsRs, "es-rs"}, {Method::EsPf, "es-pf"},       {Method::Es0, "es-0"}, {Method::Kb, "kb"},
      {Method::Lp, "lp"},      {Method::Playbook, "playbook"}, {Method::Ts, "ts"}};
  return names;
}

inline std::string to_string(Method m) {
  for (const auto& [k, v] : method_names()) {
    if (k == m) return v;
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (const auto& [k, v] : method_names()) {
    if (v == s) return k;
  }
  throw ConfigError("unknown method: " + s);
}

inline bool is_shotgun(Method m) { return m == Method::EsRs || m == Method::EsPf || m == Method::Es0; }

struct ExperimentConfig {
  std::string problem = "branin";
  Method method = Method::EsRs;
  int batch_size = 10;
  int budget = 200;
  int repeats = 51;
  std::uint64_t base_seed = 0;
  double epsilon = 0.1;
  double gamma = 1.0;
  int gp_restarts = 10;
  InnerSearchSettings inner;

  /// Budget below 2d leaves no room for the initial design.
  void validate() const {
    const ProblemSpec p = make_problem(problem);
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (budget < 2 * p.dim()) throw ConfigError("budget must be at least twice the problem dimension");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    if (gp_restarts < 1) throw ConfigError("gp restarts must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const InnerSearchSettings& s) {
  j = {{"evaluations_per_dim", s.evaluations_per_dim}, {"restarts", s.restarts},
       {"nsga2_generations", s.nsga2_generations},     {"ts_candidates_per_dim", s.ts_candidates_per_dim},
       {"ts_candidates_cap", s.ts_candidates_cap},     {"presample_points", s.presample_points},
       {"presample_refine", s.presample_refine}};
}

inline void from_json(const nlohmann::json& j, InnerSearchSettings& s) {
  j.at("evaluations_per_dim").get_to(s.evaluations_per_dim);
  j.at("restarts").get_to(s.restarts);
  j.at("nsga2_generations").get_to(s.nsga2_generations);
  j.at("ts_candidates_per_dim").get_to(s.ts_candidates_per_dim);
  j.at("ts_candidates_cap").get_to(s.ts_candidates_cap);
  j.at("presample_points").get_to(s.presample_points);
  j.at("presample_refine").get_to(s.presample_refine);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"problem", c.problem}, {"method", to_string(c.method)}, {"batch_size", c.batch_size},
       {"budget", c.budget},   {"repeats", c.repeats},           {"base_seed", c.base_seed},
       {"epsilon", c.epsilon}, {"gamma", c.gamma},               {"gp_restarts", c.gp_restarts},
       {"inner", c.inner}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  j.at("problem").get_to(c.problem);
  c.method = parse_method(j.at("method").get<std::string>());
  j.at("batch_size").get_to(c.batch_size);
  j.at("budget").get_to(c.budget);
  j.at("repeats").get_to(c.repeats);
  j.at("base_seed").get_to(c.base_seed);
  j.at("epsilon").get_to(c.epsilon);
  j.at("gamma").get_to(c.gamma);
  j.at("gp_restarts").get_to(c.gp_restarts);
  j.at("inner").get_to(c.inner);
}

/// Fields that change the numbers a run produces; repeats only changes how many runs exist.
inline bool same_run_settings(const ExperimentConfig& a, const ExperimentConfig& b) {
  nlohmann::json ja = a, jb = b;
  ja.erase("repeats");
  jb.erase("repeats");
  return ja == jb;
}

struct IterationRecord {
  Matrix locations;
  Vector values;
  GpHyperparams hyperparams;  ///< model space
  std::optional<Vector> anchor;  ///< shotgun methods only
  double radius = 0.0;
  bool explored = false;
  bool used_fallback = false;
};

struct RunRecord {
  ExperimentConfig config;
  int repeat_index = 0;
  std::uint64_t design_seed = 0;
  std::uint64_t method_seed = 0;
  double reference_minimum = 0.0;
  Matrix design;
  Vector design_values;
  std::vector<IterationRecord> iterations;
  /// Best value seen after each evaluation; length equals the budget for complete runs.
  std::vector<double> best_so_far;
  bool failed = false;
  std::string error;

  double final_best() const { return best_so_far.empty() ? std::numeric_limits<double>::infinity() : best_so_far.back(); }
  double final_gap() const { return std::abs(final_best() - reference_minimum); }
};

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    nlohmann::json j = {{"locations", detail::matrix_json(it.locations)},
                        {"values", detail::vector_json(it.values)},
                        {"lengthscale", it.hyperparams.lengthscale},
                        {"signal_variance", it.hyperparams.signal_variance},
                        {"jitter", it.hyperparams.jitter}};
    if (it.anchor) {
      j["anchor"] = detail::vector_json(*it.anchor);
      j["radius"] = it.radius;
      j["explored"] = it.explored;
      j["used_fallback"] = it.used_fallback;
    }
    its.push_back(std::move(j));
  }
  return {{"config", r.config},
          {"repeat_index", r.repeat_index},
          {"design_seed", r.design_seed},
          {"method_seed", r.method_seed},
          {"reference_minimum", r.reference_minimum},
          {"design", detail::matrix_json(r.design)},
          {"design_values", detail::vector_json(r.design_values)},
          {"iterations", its},
          {"best_so_far", r.best_so_far},
          {"failed", r.failed},
          {"error", r.error}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  j.at("config").get_to(r.config);
  const Eigen::Index d = make_problem(r.config.problem).dim();
  j.at("repeat_index").get_to(r.repeat_index);
  j.at("design_seed").get_to(r.design_seed);
  j.at("method_seed").get_to(r.method_seed);
  j.at("reference_minimum").get_to(r.reference_minimum);
  r.design = detail::matrix_from_json(j.at("design"), d);
  r.design_values = detail::vector_from_json(j.at("design_values"));
  for (const auto& ji : j.at("iterations")) {
    IterationRecord it;
    it.locations = detail::matrix_from_json(ji.at("locations"), d);
    it.values = detail::vector_from_json(ji.at("values"));
    it.hyperparams = {ji.at("lengthscale").get<double>(), ji.at("signal_variance").get<double>(),
                      ji.at("jitter").get<double>()};
    if (ji.contains("anchor")) {
      it.anchor = detail::vector_from_json(ji.at("anchor"));
      it.radius = ji.at("radius").get<double>();
      it.explored = ji.at("explored").get<bool>();
      it.used_fallback = ji.at("used_fallback").get<bool>();
    }
    r.iterations.push_back(std::move(it));
  }
  j.at("best_so_far").get_to(r.best_so_far);
  j.at("failed").get_to(r.failed);
  j.at("error").get_to(r.error);
  return r;
}

/// Seed of the initial design; depends on base seed and repeat only, so every method shares it.
inline std::uint64_t design_seed(std::uint64_t base_seed, int repeat_index) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(repeat_index), 0);
}

inline std::uint64_t method_seed(std::uint64_t base_seed, int repeat_index) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(repeat_index), 1);
}

inline BatchProposal propose_batch(const ExperimentConfig& cfg, const GpModel& model, int q, const Box& bounds,
                                   Rng& rng) {
  const int d = bounds.dim();
  switch (cfg.method) {
    case Method::EsRs:
    case Method::EsPf:
    case Method::Es0: {
      ShotgunConfig sc;
      sc.epsilon = cfg.epsilon;
      sc.gamma = cfg.gamma;
      sc.batch_size = q;
      sc.mode = cfg.method == Method::EsRs   ? SelectionMode::RandomSpace
                : cfg.method == Method::EsPf ? SelectionMode::ParetoFront
                                             : SelectionMode::PureExploit;
      return eshotgun_select(model, sc, bounds, rng, cfg.inner);
    }
    case Method::Kb:
      return kriging_believer_select(model, q, model.incumbent(), bounds, cfg.inner.budget(d, rng()));
    case Method::Lp:
      return local_penalisation_select(model, q, PenaliserKind::Soft, bounds, rng, cfg.inner);
    case Method::Playbook:
      return local_penalisation_select(model, q, PenaliserKind::Hard, bounds, rng, cfg.inner);
    case Method::Ts:
      return thompson_select(model, q, std::max(q, cfg.inner.ts_candidates(d)), bounds, rng);
  }
  throw ConfigError("unhandled method");
}

/// One optimisation repeat. Errors are caught and recorded on the returned record.
inline RunRecord run_single(const ExperimentConfig& cfg, int repeat_index) {
  cfg.validate();
  const ProblemSpec problem = make_problem(cfg.problem);
  const Box& bounds = problem.bounds;
  const int d = problem.dim();

  RunRecord rec;
  rec.config = cfg;
  rec.repeat_index = repeat_index;
  rec.design_seed = design_seed(cfg.base_seed, repeat_index);
  rec.method_seed = method_seed(cfg.base_seed, repeat_index);
  rec.reference_minimum = problem.reference_minimum;

  double best = std::numeric_limits<double>::infinity();
  auto observe = [&](double v) {
    best = std::min(best, v);
    rec.best_so_far.push_back(best);
  };

  try {
    rec.design = latin_hypercube_maximin(2 * d, d, rec.design_seed).in(bounds);
    rec.design_values.resize(rec.design.rows());
    Dataset data;
    for (Eigen::Index i = 0; i < rec.design.rows(); ++i) {
      rec.design_values[i] = problem.evaluate(rec.design.row(i).transpose());
      observe(rec.design_values[i]);
      data.append(rec.design.row(i).transpose(), rec.design_values[i]);
    }

    Rng rng(rec.method_seed);
    std::optional<GpHyperparams> warm;
    const double dup_tol = 1e-12 * bounds.diagonal();
    while (static_cast<int>(rec.best_so_far.size()) < cfg.budget) {
      const int q = std::min(cfg.batch_size, cfg.budget - static_cast<int>(rec.best_so_far.size()));
      GpFitOptions fit;
      fit.restarts = cfg.gp_restarts;
      fit.warm_start = warm;
      const GpModel model = GpModel::fit(data, bounds, fit, rng);
      warm = model.hyperparams();

      const BatchProposal batch = propose_batch(cfg, model, q, bounds, rng);
      IterationRecord it;
      it.hyperparams = model.hyperparams();
      it.locations = batch.locations;
      it.values.resize(batch.size());
      if (is_shotgun(cfg.method)) {
        it.anchor = batch.anchor;
        it.radius = batch.radius;
        it.explored = batch.explored;
        it.used_fallback = batch.used_fallback;
      }
      for (int i = 0; i < batch.size(); ++i) {
        const Vector x = bounds.clip(batch.locations.row(i).transpose());
        it.locations.row(i) = x.transpose();
        it.values[i] = problem.evaluate(x);
        observe(it.values[i]);
        // Repeated locations add nothing to a noiseless model and would make K singular.
        if (data.find_near(x, dup_tol) < 0) data.append(x, it.values[i]);
      }
      rec.iterations.push_back(std::move(it));
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

inline std::vector<RunRecord> load_records(const std::filesystem::path& file) {
  std::vector<RunRecord> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      // A partially written final line from an interrupted run; it is recomputed.
    }
  }
  return out;
}

inline constexpr const char* kRecordsFile = "records.jsonl";

/// Runs every repeat of `cfg`, reusing completed repeats found in `out_dir`
/// and appending new ones there as they finish. Results are ordered by repeat index.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int parallelism,
                                             const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  cfg.validate();
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");

  std::map<int, RunRecord> done;
  std::ofstream sink;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    const auto file = *out_dir / kRecordsFile;
    for (auto& r : load_records(file)) {
      if (!same_run_settings(r.config, cfg)) {
        throw ConfigError("records in " + out_dir->string() + " were produced with different settings");
      }
      if (!r.failed && r.repeat_index < cfg.repeats) done.emplace(r.repeat_index, std::move(r));
    }
    // Rewrite without torn lines, failed runs or duplicates before appending.
    std::ofstream rewrite(file, std::ios::trunc);
    for (const auto& [i, r] : done) rewrite << to_json(r).dump() << '\n';
    rewrite.close();
    sink.open(file, std::ios::app);
  }

  std::vector<int> todo;
  for (int i = 0; i < cfg.repeats; ++i) {
    if (!done.count(i)) todo.push_back(i);
  }
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      RunRecord r = run_single(cfg, todo[k]);
      std::lock_guard<std::mutex> lock(mu);
      if (sink.is_open()) sink << to_json(r).dump() << '\n' << std::flush;
      done.emplace(r.repeat_index, std::move(r));
    }
  };
  const int n_threads = std::min<int>(parallelism, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<RunRecord> out;
  for (auto& [i, r] : done) out.push_back(std::move(r));
  return out;
}

struct ConvergencePoint {
  int t = 0;  ///< evaluations used, 1-based
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Median and interquartile range of |f*(t) - f_min| across the successful records.
inline std::vector<ConvergencePoint> emit_convergence(const std::vector<RunRecord>& records) {
  std::vector<const RunRecord*> ok;
  for (const auto& r : records) {
    if (!r.failed) ok.push_back(&r);
  }
  if (ok.empty()) throw ConfigError("no successful records to summarise");
  std::size_t length = ok.front()->best_so_far.size();
  for (const auto* r : ok) length = std::min(length, r->best_so_far.size());
  std::vector<ConvergencePoint> out;
  std::vector<double> gaps(ok.size());
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t k = 0; k < ok.size(); ++k) gaps[k] = std::abs(ok[k]->best_so_far[t] - ok[k]->reference_minimum);
    out.push_back({static_cast<int>(t + 1), median(gaps), quantile(gaps, 0.25), quantile(gaps, 0.75)});
  }
  return out;
}

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergencePoint>& series) {
  os << "t,median,q25,q75\n";
  os.precision(17);
  for (const auto& p : series) os << p.t << ',' << p.median << ',' << p.q25 << ',' << p.q75 << '\n';
}

/// Final gaps by repeat index.
inline MethodSample method_sample(const std::string& name, const std::vector<RunRecord>& records) {
  MethodSample s{name, {}};
  for (const auto& r : records) s.final_gaps.push_back(r.final_gap());
  return s;
}

}  // namespace eshotgun
