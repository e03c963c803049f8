#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsmo/algorithms.hpp"
#include "dsmo/hyperparam.hpp"
#include "dsmo/policy_eval.hpp"
#include "dsmo/synthetic.hpp"
#include "test_support.hpp"

using namespace dsmo;

namespace {

GossipMatrix ring(int K) {
  return mixing_matrix(build_topology(TopologyKind::Ring, K),
                       MixingScheme::UniformRing);
}

GossipMatrix complete(int K) {
  return mixing_matrix(build_topology(TopologyKind::Complete, K),
                       MixingScheme::MeanMatrix);
}

StepSchedule diminishing(double C1, double mu) {
  StepSchedule sched;
  sched.regime = StepSchedule::Regime::Diminishing;
  sched.C1 = C1;
  sched.mu = mu;
  return sched;
}

}  // namespace

TEST_CASE("dbsa rejects multilevel problems") {
  SyntheticOptions opts;
  opts.M = 2;
  opts.d_x = 2;
  opts.inner_dims = {2, 2};
  opts.K = 2;
  opts.seed = 1;
  const auto problem = make_synthetic_quadratic(opts);
  RunConfig cfg;
  cfg.T = 3;
  CHECK_THROWS_AS(
      run_dbsa(*problem, complete(2), diminishing(10, 1), 1.0, cfg),
      NotBilevel);
}

TEST_CASE("dbsa round zero takes no inner samples") {
  SyntheticOptions opts;
  opts.M = 1;
  opts.d_x = 2;
  opts.inner_dims = {2};
  opts.K = 3;
  opts.seed = 4;
  const auto problem = make_synthetic_quadratic(opts);
  RunConfig cfg;
  cfg.T = 3;
  cfg.seed = 5;
  cfg.eval_every = 1;
  const auto records =
      run_dbsa(*problem, ring(3), diminishing(10, 1), 1.0, cfg);
  REQUIRE(records.size() == 4);
  CHECK(records[0].samples_total == 0);
  // Round t consumes K*(t+1) queries: t inner, one outer.
  CHECK(records[1].samples_total == 3);       // 3*(0+1)
  CHECK(records[2].samples_total == 3 + 6);   // +3*(1+1)
  CHECK(records[3].samples_total == 9 + 9);   // +3*(2+1)
}

TEST_CASE("dbsa on the noise-free identity instance tracks y -> x region") {
  const Matrix I2 = Matrix::Identity(2, 2);
  Vector c(2);
  c << 2.0, -1.0;
  const auto problem = testing::explicit_synthetic({I2}, {I2}, c, 0.5, 3);

  RunConfig cfg;
  cfg.T = 60;
  cfg.seed = 8;
  cfg.eval_every = 60;
  const auto records =
      run_dbsa(*problem, complete(3), diminishing(5, 0.5), 1.0, cfg);

  // The outer step follows grad_1 f = lambda x, so x contracts toward zero,
  // and late inner loops solve y*(x) = x accurately.
  CHECK(records.back().mse_to_opt <=
        records.front().mse_to_opt + 1e-12);
  CHECK(records.back().consensus_y[0] <= 1e-6);
}

TEST_CASE("dsgd requires the compositional form") {
  SyntheticOptions opts;
  opts.M = 1;
  opts.d_x = 2;
  opts.inner_dims = {2};
  opts.K = 2;
  opts.seed = 2;
  const auto problem = make_synthetic_quadratic(opts);
  RunConfig cfg;
  cfg.T = 2;
  CHECK_THROWS_AS(run_dsgd(*problem, complete(2), diminishing(10, 1),
                           DsgdWeights{}, cfg),
                  NotCompositional);
}

TEST_CASE("dsgd round zero uses the zero inner estimate") {
  const auto problem = make_policy_eval_problem(6, 3, 0.9, 1.0, 3, 11);
  RunConfig cfg;
  cfg.T = 2;
  cfg.seed = 3;
  cfg.eval_every = 1;
  const auto records = run_dsgd(*problem, ring(3), diminishing(20, 1.0),
                                DsgdWeights{}, cfg);
  REQUIRE(records.size() == 3);
  CHECK(records[0].samples_total == 0);
  CHECK(records[1].samples_total == 3 * 2);      // outer pair only at t=0
  CHECK(records[2].samples_total == 6 + 3 * 3);  // one inner + outer pair
}

TEST_CASE("dsgd inner estimate converges geometrically with constant eta") {
  // Deterministic environment: one-hot transitions and zero reward noise
  // make every inner value sample equal to the exact conditional mean.
  MdpEnvironment env;
  env.gamma = 0.5;
  env.reward_noise_std = 0.0;
  env.features = Matrix(3, 2);
  env.features << 0.2, 0.8, 0.6, 0.4, 0.9, 0.1;
  env.transitions = Matrix::Zero(3, 3);
  env.transitions(0, 1) = 1.0;
  env.transitions(1, 2) = 1.0;
  env.transitions(2, 0) = 1.0;
  Matrix rewards(3, 3);
  rewards.setConstant(0.3);
  env.reward_means = {rewards, rewards};
  const auto problem = std::make_shared<PolicyEvalProblem>(env, 1.0, 2);

  DsgdWeights eta;
  eta.kind = DsgdWeights::Kind::Constant;
  eta.value = 0.4;

  RunConfig cfg;
  cfg.T = 25;
  cfg.seed = 9;
  cfg.eval_every = 25;
  Vector y_final;
  Vector x_final;
  const std::vector<EvalHook> hooks{
      [&](long t, const std::vector<AgentState>& states, const Vector&,
          long long) {
        if (t == 25) {
          y_final = states[0].y[0];
          x_final = states[0].x;
        }
      }};
  // Essentially zero outer step keeps x at the origin.
  run_dsgd(*problem, complete(2), diminishing(30, 1e15), eta, cfg, hooks);

  REQUIRE(y_final.size() == problem->compositional_dim());
  CHECK(x_final.norm() <= 1e-12);
  RngStream dummy(1);
  const Vector g0 =
      problem->sample_inner_value(0, Vector::Zero(2), dummy);  // deterministic
  // Last round runs 24 averaging steps: the residual is (1-eta)^24 exactly.
  const double expected = std::pow(1.0 - eta.value, 24) * g0.norm();
  CHECK(std::abs((y_final - g0).norm() - expected) <= 1e-9);
}

TEST_CASE("dsgd makes progress on policy evaluation") {
  const auto problem = make_policy_eval_problem(8, 3, 0.9, 1.0, 3, 42);
  RunConfig cfg;
  cfg.T = 60;
  cfg.seed = 12;
  cfg.eval_every = 20;
  const auto records = run_dsgd(*problem, ring(3), diminishing(20, 1.0),
                                DsgdWeights{}, cfg);
  CHECK(records.back().mse_to_opt < records.front().mse_to_opt);
}

TEST_CASE("hyperparameter task: losses fall and dsmo needs fewer samples") {
  const auto [train, val] = split_dataset(make_synthetic_dataset(90, 4, 17), 60);
  const auto problem = make_hyperparam_problem(train, val, 5, 0);
  const GossipMatrix W = ring(5);

  auto val_loss_hook = [&](std::vector<double>& losses) {
    return EvalHook([&losses, problem](long, const std::vector<AgentState>& states,
                                       const Vector&, long long) {
      Vector y_bar = Vector::Zero(4);
      for (const auto& a : states) y_bar += a.y[0];
      y_bar /= static_cast<double>(states.size());
      losses.push_back(problem->validation_loss(y_bar));
    });
  };

  std::vector<double> dbsa_losses;
  RunConfig bcfg;
  bcfg.T = 60;
  bcfg.seed = 5;
  bcfg.eval_every = 10;
  const auto dbsa = run_dbsa(*problem, W, diminishing(10, 1.0), 0.1, bcfg,
                             {val_loss_hook(dbsa_losses)});
  CHECK(dbsa_losses.back() < dbsa_losses.front());

  std::vector<double> dsmo_losses;
  StepSchedule sched = diminishing(20, 1.0);
  sched.b_rule = StepSchedule::BRule::Fixed;
  sched.b_fixed = 5;
  RunConfig mcfg;
  mcfg.T = 200;
  mcfg.seed = 5;
  mcfg.eval_every = 10;
  const auto dsmo = run_dsmo(*problem, W, sched, mcfg,
                             {val_loss_hook(dsmo_losses)});

  // DSMO reaches the loss DBSA ends at while spending fewer total samples.
  long long crossing = -1;
  for (std::size_t i = 0; i < dsmo_losses.size(); ++i) {
    if (dsmo_losses[i] <= dbsa_losses.back()) {
      crossing = dsmo[i].samples_total;
      break;
    }
  }
  REQUIRE(crossing >= 0);
  CHECK(crossing < dbsa.back().samples_total);
}

TEST_CASE("dsmo outperforms dsgd in samples to reach dsgd's final error") {
  const auto problem = make_policy_eval_problem(10, 3, 0.9, 1.0, 3, 19);
  const GossipMatrix W = ring(3);

  RunConfig cfg;
  cfg.T = 120;
  cfg.seed = 33;
  cfg.eval_every = 4;
  const auto dsgd_records =
      run_dsgd(*problem, W, diminishing(20, 1.0), DsgdWeights{}, cfg);
  const double target = dsgd_records.back().mse_to_opt;

  StepSchedule sched = diminishing(50, 1.0);
  sched.b_rule = StepSchedule::BRule::Theory;  // kappa = 1 -> b = 0
  RunConfig dsmo_cfg;
  dsmo_cfg.T = 4000;
  dsmo_cfg.seed = 33;
  dsmo_cfg.eval_every = 40;
  const auto dsmo_records = run_dsmo(*problem, W, sched, dsmo_cfg);

  const auto crossing = samples_to_epsilon(dsmo_records, target, "mse_to_opt");
  REQUIRE(crossing.has_value());
  CHECK(*crossing < dsgd_records.back().samples_total);
}
