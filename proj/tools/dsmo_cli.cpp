#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "dsmo/config.hpp"
#include "dsmo/metrics.hpp"
#include "dsmo/network.hpp"
#include "dsmo/problems.hpp"

namespace fs = std::filesystem;
using namespace dsmo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  int threads = 1;
  long eval_every = -1;
  double epsilon = -1.0;
};

ExperimentConfig load_and_override(const GlobalArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.output_path = args.out_dir;
  if (args.eval_every >= 0) cfg.eval_every = args.eval_every;
  return cfg;
}

void write_manifest(const ExperimentConfig& cfg, const fs::path& dir) {
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << resolved_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("manifest write failed");
}

int cmd_run(const GlobalArgs& args) {
  const ExperimentConfig cfg = load_and_override(args);
  const fs::path dir(cfg.output_path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir: " + dir.string());
  write_manifest(cfg, dir);

  for (int rep = 0; rep < cfg.reps; ++rep) {
    const auto records = run_experiment(cfg, rep, args.threads);
    const std::string run_id = make_run_id(cfg, cfg.network.K, rep);
    write_csv(records, (dir / (run_id + ".csv")).string());
    std::cout << run_id << ": " << records.size() << " records, final t="
              << records.back().t << ", samples="
              << records.back().samples_total << '\n';
  }
  std::cout << "manifest: " << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_sweep(const GlobalArgs& args) {
  ExperimentConfig cfg = load_and_override(args);
  if (!cfg.sweep)
    throw ConfigError("sweep subcommand needs a 'sweep' block", "/sweep");
  if (args.epsilon > 0.0) cfg.sweep->epsilon = args.epsilon;

  const fs::path dir(cfg.output_path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir: " + dir.string());
  write_manifest(cfg, dir);

  std::vector<RunRecord> all;
  for (int K : cfg.sweep->K_list) {
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const auto records = run_experiment(cfg, rep, args.threads, K);
      const std::string run_id = make_run_id(cfg, K, rep);
      write_csv(records, (dir / (run_id + ".csv")).string());
      all.insert(all.end(), records.begin(), records.end());
      std::cout << run_id << ": final " << cfg.sweep->field << "="
                << record_field(records.back(), cfg.sweep->field) << '\n';
    }
  }

  const auto table = speedup_table(all, cfg.sweep->epsilon, cfg.sweep->field);
  std::ofstream out(dir / "speedup.csv", std::ios::binary);
  if (!out) throw IoError("cannot write speedup report");
  out << "K,reps,median_log10_samples,q125_log10_samples,q875_log10_samples\n";
  std::cout << "K reps median_log10 q12.5 q87.5\n";
  for (const auto& row : table) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g", row.K, row.reps,
                  row.median_log10_samples, row.q125_log10_samples,
                  row.q875_log10_samples);
    out << buf << '\n';
    std::printf("%d %d %.4f %.4f %.4f\n", row.K, row.reps,
                row.median_log10_samples, row.q125_log10_samples,
                row.q875_log10_samples);
  }
  return kExitOk;
}

int cmd_validate_network(const GlobalArgs& args) {
  const ExperimentConfig cfg = load_and_override(args);
  const Topology topo = build_topology(cfg.network.kind, cfg.network.K,
                                       cfg.network.edge_prob, cfg.network.seed);
  const GossipMatrix gossip = mixing_matrix(topo, cfg.network.scheme);
  const Matrix& W = gossip.W;
  const int K = gossip.agents();

  const double sym_dev = (W - W.transpose()).cwiseAbs().maxCoeff();
  const double min_entry = W.minCoeff();
  double row_dev = 0.0;
  double col_dev = 0.0;
  for (int i = 0; i < K; ++i) {
    row_dev = std::max(row_dev, std::abs(W.row(i).sum() - 1.0));
    col_dev = std::max(col_dev, std::abs(W.col(i).sum() - 1.0));
  }
  bool sparsity_ok = true;
  for (int i = 0; i < K && sparsity_ok; ++i)
    for (int j = 0; j < K; ++j)
      if (W(i, j) > 0.0 && i != j && !topo.has_edge(i, j)) {
        sparsity_ok = false;
        break;
      }

  const bool ok = sym_dev <= 1e-12 && min_entry >= 0.0 && row_dev <= 1e-12 &&
                  col_dev <= 1e-12 && gossip.rho < 1.0 && sparsity_ok;

  std::printf("K: %d\n", K);
  std::printf("scheme: %s\n", to_string(cfg.network.scheme).c_str());
  std::printf("rho: %.12g\n", gossip.rho);
  std::printf("row_sum_max_dev: %.3e\n", row_dev);
  std::printf("col_sum_max_dev: %.3e\n", col_dev);
  std::printf("symmetry_max_dev: %.3e\n", sym_dev);
  std::printf("min_entry: %.3e\n", min_entry);
  std::printf("edges_respected: %s\n", sparsity_ok ? "yes" : "no");
  std::printf("connected: yes\n");  // build_topology throws otherwise
  std::printf("verdict: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitValidation;
}

int cmd_gradient_check(const GlobalArgs& args, int num_points, double fd_step) {
  const ExperimentConfig cfg = load_and_override(args);
  const auto problem = build_problem(cfg);
  if (!problem->has_exact_oracle())
    throw NoExactOracle(problem->tag() + ": no exact oracles to check");

  RngStream rng(derive_key(cfg.base_seed,
                           {static_cast<std::uint64_t>(RngPurpose::TestPoints),
                            0xF00DULL}));
  const Index d = problem->dims().d_x;
  double max_rel = 0.0;
  for (int p = 0; p < num_points; ++p) {
    Vector x(d);
    for (Index i = 0; i < d; ++i) x[i] = rng.normal();
    // Hyperparameter weights must stay in the strongly convex region.
    if (problem->tag() == "hyperparam") x = x.cwiseAbs() + Vector::Constant(d, 0.1);
    const Vector exact = exact_hypergradient(*problem, x);
    const Vector fd = fd_hypergradient(*problem, x, fd_step);
    const double rel =
        (exact - fd).norm() / std::max(exact.norm(), 1e-12);
    max_rel = std::max(max_rel, rel);
  }
  std::printf("points: %d\n", num_points);
  std::printf("fd_step: %.3e\n", fd_step);
  std::printf("max_rel_err: %.6e\n", max_rel);
  const bool ok = max_rel <= 1e-4;
  std::printf("verdict: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitValidation;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  // Supports '*' and '?'.
  std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() &&
        (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::vector<std::string> expand_glob(const std::string& glob) {
  const fs::path full(glob);
  const fs::path dir =
      full.has_parent_path() ? full.parent_path() : fs::path(".");
  const std::string pattern = full.filename().string();
  std::vector<std::string> paths;
  if (!fs::exists(dir)) return paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (glob_match(pattern, entry.path().filename().string()))
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

int cmd_report(const std::string& glob, const std::string& kind,
               double epsilon, const std::string& field, long t_min,
               long t_max) {
  const auto paths = expand_glob(glob);
  if (paths.empty())
    throw InsufficientData("report: no CSV files match '" + glob + "'");
  std::vector<RunRecord> all;
  for (const auto& p : paths) {
    const auto records = read_csv(p);
    all.insert(all.end(), records.begin(), records.end());
  }
  if (all.empty()) throw InsufficientData("report: matched CSVs are empty");

  std::map<std::string, std::vector<RunRecord>> by_run;
  for (const auto& r : all) by_run[r.run_id].push_back(r);

  if (kind == "slope") {
    std::printf("run_id,K,slope,residual_rms,points,pass\n");
    bool all_ok = true;
    for (const auto& [run_id, records] : by_run) {
      long horizon = 0;
      for (const auto& r : records) horizon = std::max(horizon, r.t);
      const long lo = t_min > 0 ? t_min : horizon / 10;  // skip transients
      const long hi = t_max > 0 ? t_max : horizon;
      const SlopeFit fit = loglog_slope(records, lo, hi, field);
      const bool pass = fit.slope >= -1.3 && fit.slope <= -0.7;
      all_ok = all_ok && pass;
      std::printf("%s,%d,%.6f,%.6f,%d,%s\n", run_id.c_str(),
                  records.front().K, fit.slope, fit.residual_rms, fit.points,
                  pass ? "PASS" : "FAIL");
    }
    return all_ok ? kExitOk : kExitValidation;
  }
  if (kind == "speedup") {
    const auto table = speedup_table(all, epsilon, field);
    std::printf("K,reps,median_log10_samples,q125,q875\n");
    for (const auto& row : table)
      std::printf("%d,%d,%.6f,%.6f,%.6f\n", row.K, row.reps,
                  row.median_log10_samples, row.q125_log10_samples,
                  row.q875_log10_samples);
    return kExitOk;
  }
  if (kind == "consensus") {
    std::printf("run_id,K,consensus_first,consensus_last,late_window_mean\n");
    for (const auto& [run_id, records] : by_run) {
      std::vector<RunRecord> sorted = records;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const RunRecord& a, const RunRecord& b) {
                         return a.t < b.t;
                       });
      const std::size_t tail_start = sorted.size() * 3 / 4;
      double late = 0.0;
      for (std::size_t i = tail_start; i < sorted.size(); ++i)
        late += sorted[i].consensus_x;
      late /= static_cast<double>(sorted.size() - tail_start);
      std::printf("%s,%d,%.6e,%.6e,%.6e\n", run_id.c_str(),
                  sorted.front().K, sorted.front().consensus_x,
                  sorted.back().consensus_x, late);
    }
    return kExitOk;
  }
  throw ConfigError("report kind must be slope|speedup|consensus", "/kind");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized stochastic multi-level optimization simulator"};
  app.require_subcommand(1);

  GlobalArgs args;
  int points = 20;
  double fd_step = 1e-5;
  std::string report_glob;
  std::string report_kind = "slope";
  std::string report_field = "mse_to_opt";
  long t_min = 0;
  long t_max = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", args.config_path,
                                "experiment config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--threads", args.threads, "worker threads per run");
    cmd->add_option("--eval-every", args.eval_every,
                    "evaluation cadence override");
    cmd->add_option("--epsilon", args.epsilon, "target accuracy");
  };

  auto* run = app.add_subcommand("run", "execute the configured repetitions");
  add_common(run, true);
  auto* sweep = app.add_subcommand("sweep", "run the config over sweep.K_list");
  add_common(sweep, true);
  auto* validate =
      app.add_subcommand("validate-network", "check gossip-matrix invariants");
  add_common(validate, true);
  auto* gradcheck = app.add_subcommand(
      "gradient-check", "exact hypergradient vs central finite differences");
  add_common(gradcheck, true);
  gradcheck->add_option("--points", points, "number of random test points");
  gradcheck->add_option("--fd-step", fd_step, "finite-difference step");
  auto* report = app.add_subcommand("report", "summarize run CSVs");
  report->add_option("glob", report_glob, "CSV glob, e.g. out/*.csv")
      ->required();
  report->add_option("--kind", report_kind, "slope|speedup|consensus");
  report->add_option("--field", report_field, "record field to analyze");
  report->add_option("--epsilon", args.epsilon, "target accuracy");
  report->add_option("--t-min", t_min, "slope window lower bound");
  report->add_option("--t-max", t_max, "slope window upper bound");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(args);
    if (sweep->parsed()) return cmd_sweep(args);
    if (validate->parsed()) return cmd_validate_network(args);
    if (gradcheck->parsed()) return cmd_gradient_check(args, points, fd_step);
    if (report->parsed())
      return cmd_report(report_glob, report_kind,
                        args.epsilon > 0 ? args.epsilon : 1e-6, report_field,
                        t_min, t_max);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
