#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "eshotgun/eshotgun.hpp"

namespace fs = std::filesystem;
using namespace eshotgun;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int thread_count(int requested) {
  if (const char* env = std::getenv("ESHOTGUN_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError("ESHOTGUN_THREADS must be a positive integer");
  }
  if (requested >= 1) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<RunRecord> read_dir(const fs::path& dir) {
  const fs::path file = dir / kRecordsFile;
  if (!fs::exists(file)) throw ConfigError("no " + std::string(kRecordsFile) + " in " + dir.string());
  return load_records(file);
}

int cmd_run(const ExperimentConfig& cfg, int threads, const fs::path& out) {
  const auto records = run_experiment(cfg, thread_count(threads), out);
  int failed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++failed;
      std::cerr << "repeat " << r.repeat_index << " failed: " << r.error << '\n';
    }
  }
  std::vector<RunRecord> ok;
  for (const auto& r : records) {
    if (!r.failed) ok.push_back(r);
  }
  if (!ok.empty()) {
    const MedianMad mm = median_and_mad(method_sample(to_string(cfg.method), ok).final_gaps);
    std::cout << cfg.problem << ' ' << to_string(cfg.method) << " q=" << cfg.batch_size << " repeats=" << ok.size()
              << " median_gap=" << mm.median << " mad=" << mm.mad << '\n';
  }
  return failed > 0 ? kRuntimeError : kOk;
}

int cmd_stats(const std::vector<fs::path>& dirs, double alpha, const std::string& format) {
  // problem -> method -> repeat -> gap
  std::map<std::string, std::map<std::string, std::map<int, double>>> gaps;
  for (const auto& dir : dirs) {
    for (const auto& r : read_dir(dir)) {
      if (!r.failed) gaps[r.config.problem][to_string(r.config.method)][r.repeat_index] = r.final_gap();
    }
  }
  nlohmann::json all = nlohmann::json::object();
  for (const auto& [problem, methods] : gaps) {
    if (methods.size() < 2) {
      std::cerr << problem << ": fewer than two methods, skipped\n";
      continue;
    }
    std::set<int> common;
    for (const auto& [k, v] : methods.begin()->second) common.insert(k);
    for (const auto& [m, by_repeat] : methods) {
      std::set<int> keep;
      for (int k : common) {
        if (by_repeat.count(k)) keep.insert(k);
      }
      common = std::move(keep);
    }
    std::vector<MethodSample> samples;
    for (const auto& [m, by_repeat] : methods) {
      MethodSample s{m, {}};
      for (int k : common) s.final_gaps.push_back(by_repeat.at(k));
      samples.push_back(std::move(s));
    }
    const ComparisonTable table = build_comparison_table(samples, alpha);
    if (format == "json") {
      all[problem] = to_json(table);
    } else {
      std::cout << "# " << problem << " (" << common.size() << " paired repeats)\n";
      write_table(std::cout, table);
    }
  }
  if (format == "json") std::cout << all.dump(2) << '\n';
  return kOk;
}

int cmd_conv(const fs::path& in, const fs::path& out) {
  const auto series = emit_convergence(read_dir(in));
  std::ofstream os(out);
  if (!os) throw ConfigError("cannot write " + out.string());
  write_convergence_csv(os, series);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epsilon-shotgun batch Bayesian optimisation benchmark harness"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string method = "es-rs";
  std::string out_dir;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Run repeated optimisations of one problem with one method");
  run->add_option("--problem", cfg.problem, "Benchmark name")->required();
  run->add_option("--method", method, "es-rs, es-pf, es-0, kb, lp, playbook or ts")->required();
  run->add_option("--batch-size,-q", cfg.batch_size)->capture_default_str();
  run->add_option("--budget", cfg.budget, "Total function evaluations")->capture_default_str();
  run->add_option("--repeats", cfg.repeats)->capture_default_str();
  run->add_option("--seed", cfg.base_seed)->capture_default_str();
  run->add_option("--epsilon", cfg.epsilon)->capture_default_str();
  run->add_option("--gamma", cfg.gamma)->capture_default_str();
  run->add_option("--gp-restarts", cfg.gp_restarts)->capture_default_str();
  run->add_option("--inner-evals-per-dim", cfg.inner.evaluations_per_dim)->capture_default_str();
  run->add_option("--ts-candidates-cap", cfg.inner.ts_candidates_cap)->capture_default_str();
  run->add_option("--threads", threads, "Parallel repeats (ESHOTGUN_THREADS overrides)");
  run->add_option("--out", out_dir, "Directory for records.jsonl")->required();

  std::vector<std::string> stats_in;
  double alpha = 0.05;
  std::string format = "table";
  auto* stats = app.add_subcommand("stats", "Compare methods per problem with Wilcoxon tests and Holm correction");
  stats->add_option("--in", stats_in, "Run directories")->required()->expected(1, -1);
  stats->add_option("--alpha", alpha)->capture_default_str();
  stats->add_option("--format", format)->check(CLI::IsMember({"table", "json"}))->capture_default_str();

  std::string conv_in, conv_out;
  auto* conv = app.add_subcommand("conv", "Write the median convergence curve with its interquartile range");
  conv->add_option("--in", conv_in, "Run directory")->required();
  conv->add_option("--out", conv_out, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      cfg.method = parse_method(method);
      return cmd_run(cfg, threads, out_dir);
    }
    if (*stats) return cmd_stats({stats_in.begin(), stats_in.end()}, alpha, format);
    if (*conv) return cmd_conv(conv_in, conv_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
