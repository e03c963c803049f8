#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsmo/metrics.hpp"
#include "dsmo/network.hpp"
#include "dsmo/problems.hpp"
#include "dsmo/schedule.hpp"

namespace dsmo {

/// One agent's iterates and running estimators. Level m lives at index m-1:
/// y tracks the best response, u the cross Hessian, v[i] the b independent
/// own-Hessian estimators feeding the truncated-series inverse. The inverse
/// operator itself (q in the update rule) is never materialized; it is
/// applied lazily from v via neumann_apply.
struct AgentState {
  Vector x;
  Vector s;  // estimator of grad_1 f
  Vector h;  // estimator of grad_2 f
  std::vector<Vector> y;
  std::vector<Matrix> u;
  std::vector<std::vector<Matrix>> v;
};

/// Zero-initialized state with v_(m,i) = mu_g[m] * I.
AgentState make_initial_state(const MultiLevelProblem& problem,
                              const std::vector<int>& neumann_depths);

struct RoundOutput {
  Vector x_bar;       // network average after the round
  Vector z_bar;       // network-average update direction of the round
  std::vector<double> direction_norms;
  long long samples_per_agent = 0;
};

/// Advances every agent one synchronized round. All gossip reads and oracle
/// evaluation points reference the time-t snapshot `current`; writes go to
/// `next` (double buffering, swapped by the caller per round). Agents may be
/// updated on any number of threads; per-query RNG streams are derived from
/// (seed, agent, purpose, level, index, t), so the result is independent of
/// the thread count. The exact gossip-average identity
/// x_bar_{t+1} = x_bar_t - alpha_t z_bar_t is verified to 1e-10 every round.
RoundOutput dsmo_round(const std::vector<AgentState>& current,
                       std::vector<AgentState>& next,
                       const MultiLevelProblem& problem,
                       const GossipMatrix& gossip, const StepSizes& steps,
                       const std::vector<int>& neumann_depths, long t,
                       std::uint64_t seed, int threads,
                       bool two_f_draws = false);

struct RunConfig {
  long T = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  long eval_every = 0;  // 0 resolves to max(1, T/500)
  bool two_f_draws = false;
  std::string run_id = "run";
};

/// Extra per-evaluation callback: (t, states, x_bar, samples_total).
using EvalHook = std::function<void(long, const std::vector<AgentState>&,
                                    const Vector&, long long)>;

/// Runs Algorithm 1 for T rounds and returns the metric records taken at the
/// evaluation cadence (always including the initial and final state).
/// Fully deterministic given the config.
std::vector<RunRecord> run_dsmo(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& schedule,
                                const RunConfig& config,
                                const std::vector<EvalHook>& hooks = {});

/// Double-loop bilevel baseline: round t runs t inner gossip-SGD steps from
/// a cold start to estimate the best response, then one outer gossip step
/// along a grad_1 f sample. Inner steps use eta_{t,i} = eta_c/(mu_g (i+1)).
/// Requires M == 1.
std::vector<RunRecord> run_dbsa(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& alpha_schedule,
                                double eta_c, const RunConfig& config,
                                const std::vector<EvalHook>& hooks = {});

struct DsgdWeights {
  enum class Kind { Harmonic, Constant };
  Kind kind = Kind::Harmonic;
  double value = 0.5;  // Constant only

  double at(long i) const {
    return kind == Kind::Harmonic ? 1.0 / static_cast<double>(i + 1) : value;
  }
};

/// Double-loop compositional baseline: round t averages t inner value
/// samples (weights eta_{t,i}) into an estimate of the inner map, then takes
/// one chain-rule outer gossip step. Requires the compositional form.
std::vector<RunRecord> run_dsgd(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& alpha_schedule,
                                const DsgdWeights& eta, const RunConfig& config,
                                const std::vector<EvalHook>& hooks = {});

/// Per-agent-per-round oracle queries of Algorithm 1 under given depths.
long long dsmo_samples_per_round(int M, const std::vector<int>& depths);

}  // namespace dsmo
