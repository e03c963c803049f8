#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsmo/algorithms.hpp"
#include "dsmo/risk_averse.hpp"
#include "dsmo/rng.hpp"

using namespace dsmo;

TEST_CASE("kappa = 0 reduces to ridge regression") {
  RngStream rng(40);
  const Index n = 60;
  Matrix W(n, 3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 3; ++j) W(i, j) = rng.normal();
    y[i] = W.row(i).sum() * 0.5 + 0.3 * rng.normal();
  }
  const double lambda = 0.8;
  const RiskAverseProblem problem(W, y, 1, 0.0, lambda, 2);

  // Without the deviation term F(x) = (1/n) sum (y_i - x^T w_i)^2
  // + lambda/2 ||x||^2, whose minimizer solves the ridge normal equations.
  const Matrix lhs = (2.0 / static_cast<double>(n)) * W.transpose() * W +
                     lambda * Matrix::Identity(3, 3);
  const Vector ridge =
      lhs.ldlt().solve((2.0 / static_cast<double>(n)) * W.transpose() * y);
  CHECK((*problem.x_star() - ridge).norm() <= 1e-7);
}

TEST_CASE("negated objective is lambda-strongly convex (midpoint test)") {
  RiskAverseOptions opts;
  opts.feat_dim = 3;
  opts.K = 4;
  opts.kappa = 1.0;  // strongest deviation weight
  opts.lambda = 1.0;
  opts.p = 2;
  opts.n_data = 80;
  opts.seed = 6;
  const auto problem = make_risk_averse_problem(opts);

  RngStream rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    Vector a(3), b(3);
    for (Index i = 0; i < 3; ++i) a[i] = 2.0 * rng.normal();
    for (Index i = 0; i < 3; ++i) b[i] = 2.0 * rng.normal();
    const Vector mid = 0.5 * (a + b);
    const double lhs = problem->objective_value(mid);
    const double rhs =
        0.5 * (problem->objective_value(a) + problem->objective_value(b)) -
        (opts.lambda / 8.0) * (a - b).squaredNorm();
    CHECK(lhs <= rhs + 1e-9);
  }
}

TEST_CASE("tiny instance optimum matches an exhaustive grid search") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.K = 2;
  opts.kappa = 0.6;
  opts.lambda = 1.0;
  opts.n_data = 20;
  opts.seed = 12;
  const auto problem = make_risk_averse_problem(opts);

  const double h = 0.005;
  double best = std::numeric_limits<double>::infinity();
  Vector best_x(2);
  for (double x0 = -1.5; x0 <= 1.5; x0 += h) {
    for (double x1 = -1.5; x1 <= 1.5; x1 += h) {
      Vector x(2);
      x << x0, x1;
      const double v = problem->objective_value(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
  }
  const Vector xs = *problem->x_star();
  CHECK(problem->objective_value(xs) <= best + 1e-12);
  CHECK((xs - best_x).lpNorm<Eigen::Infinity>() <= 5.0 * h);
}

TEST_CASE("pass-through best responses carry the inputs forward") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.K = 3;
  opts.n_data = 30;
  opts.seed = 2;
  const auto problem = make_risk_averse_problem(opts);

  Vector x(2);
  x << 0.4, -0.9;
  const Vector y1 = problem->best_response(1, x);
  REQUIRE(y1.size() == 3);
  CHECK(y1[0] == doctest::Approx(problem->mean_utility(x)));
  CHECK((y1.tail(2) - x).norm() <= 1e-15);

  const Vector y2 = problem->best_response(2, y1);
  REQUIRE(y2.size() == 4);
  CHECK(y2[0] ==
        doctest::Approx(problem->mean_deviation_moment(y1[0], x)));
  CHECK(y2[1] == doctest::Approx(y1[0]));
  CHECK((y2.tail(2) - x).norm() <= 1e-15);
}

TEST_CASE("hypergradient matches finite differences through both levels") {
  RiskAverseOptions opts;
  opts.feat_dim = 3;
  opts.K = 3;
  opts.kappa = 0.7;
  opts.lambda = 1.0;
  opts.n_data = 45;
  opts.seed = 33;
  const auto problem = make_risk_averse_problem(opts);

  RngStream rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    Vector x(3);
    for (Index i = 0; i < 3; ++i) x[i] = rng.normal();
    const Vector exact = exact_hypergradient(*problem, x);
    const Vector fd = fd_hypergradient(*problem, x, 1e-5);
    const double rel = (exact - fd).norm() / std::max(exact.norm(), 1e-12);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("both levels witness unit strong convexity") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.K = 2;
  opts.n_data = 16;
  opts.seed = 3;
  const auto problem = make_risk_averse_problem(opts);
  RngStream rng(14);
  for (int level = 1; level <= 2; ++level) {
    const Index dm = problem->dims().level_dim(level);
    const Index dp = problem->dims().level_dim(level - 1);
    for (int pair = 0; pair < 100; ++pair) {
      Vector prev(dp), a(dm), b(dm);
      for (Index i = 0; i < dp; ++i) prev[i] = rng.normal();
      for (Index i = 0; i < dm; ++i) a[i] = rng.normal();
      for (Index i = 0; i < dm; ++i) b[i] = rng.normal();
      const double inner = (problem->grad2_g(level, prev, a) -
                            problem->grad2_g(level, prev, b))
                               .dot(a - b);
      CHECK(inner >= (a - b).squaredNorm() - 1e-10);
    }
  }
}

TEST_CASE("inner Hessians are identity matrices at both levels") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.K = 2;
  opts.n_data = 10;
  opts.seed = 5;
  const auto problem = make_risk_averse_problem(opts);
  const Vector x = Vector::Zero(2);
  const Vector y1 = Vector::Zero(3);
  const Vector y2 = Vector::Zero(4);
  CHECK((problem->grad22_g(1, x, y1) - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK((problem->grad22_g(2, y1, y2) - Matrix::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("sampled level gradients are unbiased") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.K = 3;
  opts.kappa = 0.5;
  opts.n_data = 33;
  opts.seed = 8;
  const auto problem = make_risk_averse_problem(opts);

  RngStream rng(80);
  Vector x(2);
  x << 0.3, 0.2;
  const Vector y1 = problem->best_response(1, x) + Vector::Constant(3, 0.1);
  const Vector y2 = Vector::Zero(4);

  const int draws = 30000;
  Vector mean = Vector::Zero(4);
  std::vector<Vector> all;
  all.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    const int agent = static_cast<int>(rng.uniform_int(3));
    const Vector s = problem->sample_grad2_g(agent, 2, y1, y2, rng);
    mean += s;
    all.push_back(s);
  }
  mean /= static_cast<double>(draws);
  Vector var = Vector::Zero(4);
  for (const Vector& s : all) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(draws - 1);

  const Vector exact = problem->grad2_g(2, y1, y2);
  for (Index i = 0; i < 4; ++i)
    CHECK(std::abs(mean[i] - exact[i]) <=
          5.0 * std::sqrt(var[i] / draws) + 1e-12);
}

TEST_CASE("full solver run converges to the batch optimum") {
  RiskAverseOptions opts;
  opts.feat_dim = 3;
  opts.K = 3;
  opts.kappa = 0.5;
  opts.lambda = 1.0;
  opts.p = 2;
  opts.n_data = 300;
  opts.seed = 9;
  const auto problem = make_risk_averse_problem(opts);

  const GossipMatrix W = mixing_matrix(
      build_topology(TopologyKind::Ring, 3), MixingScheme::UniformRing);
  StepSchedule sched;
  sched.regime = StepSchedule::Regime::Diminishing;
  sched.C1 = 50.0;
  sched.mu = opts.lambda;
  sched.b_rule = StepSchedule::BRule::Theory;  // kappa_g = 1 -> depth 0

  RunConfig cfg;
  cfg.T = 5000;
  cfg.seed = 1;
  cfg.eval_every = 250;
  const auto records = run_dsmo(*problem, W, sched, cfg);

  CHECK(records.back().mse_to_opt <= 1e-3);
  CHECK(records.back().mse_to_opt <= 0.01 * records.front().mse_to_opt);
  for (const auto& r : records) CHECK(r.obj_gap >= -1e-10);  // F* is the min
  CHECK(records.back().consensus_x <= 1e-6);
}

TEST_CASE("parameter validation") {
  RiskAverseOptions opts;
  opts.feat_dim = 2;
  opts.n_data = 10;
  opts.kappa = -0.1;
  CHECK_THROWS_AS(make_risk_averse_problem(opts), InvalidParam);
  opts.kappa = 1.5;
  CHECK_THROWS_AS(make_risk_averse_problem(opts), InvalidParam);
  opts.kappa = 0.5;
  opts.p = 3;
  CHECK_THROWS_AS(make_risk_averse_problem(opts), InvalidParam);
  opts.p = 2;
  opts.lambda = 0.0;
  CHECK_THROWS_AS(make_risk_averse_problem(opts), InvalidParam);
  opts.lambda = 1.0;
  opts.K = 50;
  CHECK_THROWS_AS(make_risk_averse_problem(opts), EmptyShard);
}
