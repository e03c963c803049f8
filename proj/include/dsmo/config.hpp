#pragma once

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsmo/algorithms.hpp"
#include "dsmo/network.hpp"
#include "dsmo/problems.hpp"
#include "dsmo/schedule.hpp"

namespace dsmo {

using Json = nlohmann::json;

struct NetworkConfig {
  TopologyKind kind = TopologyKind::Ring;
  int K = 5;
  double edge_prob = 0.5;
  MixingScheme scheme = MixingScheme::Metropolis;
  std::uint64_t seed = 0;
};

struct SyntheticProblemConfig {
  int M = 1;
  int d_x = 2;
  std::vector<int> dims;
  double heterogeneity = 0.0;
  double noise = 0.0;
  double mu = 0.5;
  double L = 2.0;
  double lambda = 1.0;
  double e_scale = 0.3;
  double b_scale = 0.0;
  std::uint64_t seed = 0;
};

struct HyperparamProblemConfig {
  std::string train_path;
  std::string val_path;
  bool use_synthetic = false;
  Index n_train = 200;
  Index n_val = 100;
  Index dim = 14;
  std::uint64_t seed = 0;
  double mu_hint = 0.1;
};

struct PolicyEvalProblemConfig {
  int num_states = 100;
  int feat_dim = 5;
  double gamma = 0.9;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

struct RiskAverseProblemConfig {
  int feat_dim = 2;
  double kappa = 0.5;
  double lambda = 1.0;
  int p = 2;
  Index n_data = 100;
  double label_noise_var = 0.2;
  std::uint64_t seed = 0;
};

struct AlgoParams {
  bool two_f_draws = false;  // dsmo
  double eta_c = 1.0;        // dbsa
  DsgdWeights dsgd_eta;      // dsgd
};

struct SweepConfig {
  std::vector<int> K_list;
  double epsilon = 1e-6;
  std::string field = "mse_to_opt";
};

/// Fully resolved experiment description; parsing is strict (unknown keys or
/// type mismatches raise ConfigError with the JSON-pointer of the field).
struct ExperimentConfig {
  std::string problem_tag = "synthetic_quadratic";
  SyntheticProblemConfig synthetic;
  HyperparamProblemConfig hyperparam;
  PolicyEvalProblemConfig policy_eval;
  RiskAverseProblemConfig risk_averse;

  NetworkConfig network;
  std::string algo = "dsmo";
  AlgoParams algo_params;
  StepSchedule schedule;
  long T = 1000;
  int reps = 1;
  std::uint64_t base_seed = 0;
  long eval_every = 0;
  std::string output_path = "out";
  std::optional<SweepConfig> sweep;
};

ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);

/// Manifest body: the config with every default materialized.
Json resolved_json(const ExperimentConfig& config);

/// Instantiates the configured problem; a positive K_override replaces the
/// network K (used by sweeps).
std::shared_ptr<MultiLevelProblem> build_problem(const ExperimentConfig& config,
                                                 int K_override = 0);
GossipMatrix build_network(const ExperimentConfig& config, int K_override = 0);

std::string make_run_id(const ExperimentConfig& config, int K, int rep);

/// Executes repetition `rep` (seed = base_seed + rep) and returns its record
/// stream.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, int rep,
                                      int threads, int K_override = 0,
                                      const std::vector<EvalHook>& hooks = {});

}  // namespace dsmo
