#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsmo/policy_eval.hpp"
#include "dsmo/rng.hpp"

using namespace dsmo;

TEST_CASE("zero rewards and gamma=0 reduce to y*(x) = Phi x with x* = 0") {
  MdpEnvironment env;
  env.gamma = 0.0;
  env.reward_noise_std = 0.0;
  env.features = Matrix(4, 2);
  env.features << 0.1, 0.9, 0.4, 0.2, 0.7, 0.5, 0.3, 0.8;
  env.transitions = Matrix::Constant(4, 4, 0.25);
  env.reward_means = {Matrix::Zero(4, 4), Matrix::Zero(4, 4)};

  const PolicyEvalProblem problem(env, 1.0, 2);
  Vector x(2);
  x << 1.0, -2.0;
  CHECK((problem.best_response(1, x) - env.features * x).norm() <= 1e-14);
  const double expected =
      0.125 * (env.features * x).squaredNorm() + 0.5 * x.squaredNorm();
  CHECK(problem.objective_value(x) == doctest::Approx(expected));
  CHECK(problem.x_star()->norm() <= 1e-14);
  CHECK(*problem.f_star() == doctest::Approx(0.0));
}

TEST_CASE("inner Hessian is the identity (mu_g = L_g = 1)") {
  const auto problem = make_policy_eval_problem(100, 5, 0.9, 1.0, 3, 1);
  CHECK(problem->meta().mu_g[0] == 1.0);
  CHECK(problem->meta().L_g[0] == 1.0);
  CHECK(problem->meta().kappa_g[0] == 1.0);
  const Vector x = Vector::Zero(5);
  const Vector y = Vector::Zero(100);
  CHECK((problem->grad22_g(1, x, y) - Matrix::Identity(100, 100)).norm() ==
        0.0);
  RngStream rng(2);
  CHECK((problem->sample_grad22_g(0, 1, x, y, rng) -
         Matrix::Identity(100, 100))
            .norm() == 0.0);
}

TEST_CASE("direct solve matches long exact gradient descent") {
  const auto problem = make_policy_eval_problem(5, 3, 0.8, 1.0, 2, 9);
  Vector x = Vector::Zero(3);
  for (int iter = 0; iter < 20000; ++iter)
    x -= 0.1 * exact_hypergradient(*problem, x);
  CHECK((x - *problem->x_star()).norm() <= 1e-8);
}

TEST_CASE("factory validates gamma") {
  CHECK_THROWS_AS(make_policy_eval_problem(5, 2, 0.0, 1.0, 2, 1), InvalidParam);
  CHECK_THROWS_AS(make_policy_eval_problem(5, 2, 1.0, 1.0, 2, 1), InvalidParam);
  CHECK_THROWS_AS(make_policy_eval_problem(5, 2, -0.3, 1.0, 2, 1),
                  InvalidParam);
}

TEST_CASE("transition rows are normalized and features lie in [0,1]") {
  const MdpEnvironment env = make_mdp_environment(30, 4, 0.9, 5, 3);
  for (Index s = 0; s < 30; ++s) {
    CHECK(std::abs(env.transitions.row(s).sum() - 1.0) <= 1e-12);
    CHECK(env.transitions.row(s).minCoeff() >= 0.0);
  }
  CHECK(env.features.minCoeff() >= 0.0);
  CHECK(env.features.maxCoeff() <= 1.0);
  CHECK(env.reward_means.size() == 5);
}

TEST_CASE("sampled inner gradient is unbiased for the mean residual") {
  const auto problem = make_policy_eval_problem(8, 3, 0.9, 1.0, 3, 21);
  RngStream rng(99);
  Vector x(3);
  x << 0.5, -0.2, 0.9;
  const Vector y = Vector::Zero(8);

  const int draws = 30000;
  Vector mean = Vector::Zero(8);
  std::vector<Vector> all;
  all.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    const int agent = static_cast<int>(rng.uniform_int(3));
    const Vector s = problem->sample_grad2_g(agent, 1, x, y, rng);
    mean += s;
    all.push_back(s);
  }
  mean /= static_cast<double>(draws);
  Vector var = Vector::Zero(8);
  for (const Vector& s : all) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(draws - 1);

  const Vector exact = problem->grad2_g(1, x, y);
  for (Index i = 0; i < 8; ++i)
    CHECK(std::abs(mean[i] - exact[i]) <=
          5.0 * std::sqrt(var[i] / draws) + 1e-12);
}

TEST_CASE("inner gradients witness unit strong convexity") {
  const auto problem = make_policy_eval_problem(6, 3, 0.9, 1.0, 2, 13);
  RngStream rng(7);
  Vector x(3);
  x << 0.2, -0.4, 0.6;
  for (int pair = 0; pair < 100; ++pair) {
    Vector a(6), b(6);
    for (Index i = 0; i < 6; ++i) a[i] = rng.normal();
    for (Index i = 0; i < 6; ++i) b[i] = rng.normal();
    const double inner =
        (problem->grad2_g(1, x, a) - problem->grad2_g(1, x, b)).dot(a - b);
    CHECK(inner >= problem->meta().mu_g[0] * (a - b).squaredNorm() - 1e-10);
  }
}

TEST_CASE("compositional view composes to the true gradient") {
  const auto problem = make_policy_eval_problem(6, 3, 0.85, 1.0, 2, 5);
  CHECK(problem->has_compositional_form());
  CHECK(problem->compositional_dim() == 9);

  RngStream rng(31);
  Vector x(3);
  x << 0.1, 0.7, -0.5;

  // Mean inner value and Jacobian over many draws approximate the exact
  // composition chain.
  const int draws = 30000;
  Vector value_mean = Vector::Zero(9);
  Matrix jac_mean = Matrix::Zero(3, 9);
  for (int i = 0; i < draws; ++i) {
    const int agent = static_cast<int>(rng.uniform_int(2));
    value_mean += problem->sample_inner_value(agent, x, rng);
    jac_mean += problem->sample_inner_jacobian(agent, x, rng);
  }
  value_mean /= static_cast<double>(draws);
  jac_mean /= static_cast<double>(draws);

  Vector expected_value(9);
  expected_value.head(6) =
      problem->residual_matrix() * x - problem->expected_reward();
  expected_value.tail(3) = x;
  CHECK((value_mean - expected_value).lpNorm<Eigen::Infinity>() <= 0.05);

  RngStream rng2(32);
  const Vector outer = problem->sample_outer_grad(0, expected_value, rng2);
  const Vector composed = jac_mean * outer;
  const Vector truth = exact_hypergradient(*problem, x);
  CHECK((composed - truth).lpNorm<Eigen::Infinity>() <= 0.05);
}
