#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsmo/hyperparam.hpp"
#include "dsmo/rng.hpp"

using namespace dsmo;

namespace {

Dataset tiny_dataset(Index n, Index dim, std::uint64_t seed) {
  return make_synthetic_dataset(n, dim, seed);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("uniform regularizer contributes r/2 ||y||^2 exactly") {
  const auto problem =
      make_hyperparam_problem(tiny_dataset(40, 5, 1), tiny_dataset(20, 5, 2),
                              4, 0);
  RngStream rng(3);
  Vector y(5);
  for (Index i = 0; i < 5; ++i) y[i] = rng.normal();
  const double r = 0.7;
  const Vector x_r = Vector::Constant(5, r);
  const Vector x_0 = Vector::Zero(5);

  // Gradient and Hessian differences isolate the regularizer.
  CHECK((problem->grad2_g(1, x_r, y) - problem->grad2_g(1, x_0, y) - r * y)
            .norm() <= 1e-14);
  const Matrix dh = problem->grad22_g(1, x_r, y) - problem->grad22_g(1, x_0, y);
  CHECK((dh - r * Matrix::Identity(5, 5)).norm() <= 1e-14);
}

TEST_CASE("single-point inner problem matches a scalar Newton oracle") {
  // One training point makes the inner optimum colinear with the feature.
  Dataset train;
  train.features = Matrix(1, 3);
  train.features << 0.8, -0.4, 1.1;
  train.labels = Vector(1);
  train.labels << 1.0;
  Dataset val = train;

  const auto problem = make_hyperparam_problem(train, val, 1, 0);
  const double r = 1.3;
  const Vector x = Vector::Constant(3, r);

  // Minimize phi(c) = sigmoid(-c ||w||^2) + (r/2) c^2 ||w||^2 over c.
  const double wsq = train.features.row(0).squaredNorm();
  double c = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double z = -c * wsq;
    const double sig = sigmoid(z);
    const double d1 = -wsq * sig * (1.0 - sig) + r * c * wsq;
    const double d2 =
        wsq * wsq * sig * (1.0 - sig) * (1.0 - 2.0 * sig) + r * wsq;
    c -= d1 / d2;
  }
  const Vector oracle = c * train.features.row(0).transpose();
  const Vector solved = problem->best_response(1, x);
  CHECK((solved - oracle).norm() <= 1e-8);
}

TEST_CASE("round-robin split gives 40 points per agent for n=200, K=5") {
  const auto problem = make_hyperparam_problem(tiny_dataset(200, 4, 5),
                                               tiny_dataset(50, 4, 6), 5, 0);
  for (const auto& shard : problem->train_shards())
    CHECK(shard.size() == 40);
  CHECK(problem->train_shards()[2][0] == 2);
  CHECK(problem->train_shards()[2][1] == 7);
}

TEST_CASE("K larger than the dataset raises EmptyShard") {
  CHECK_THROWS_AS(
      make_hyperparam_problem(tiny_dataset(3, 4, 1), tiny_dataset(8, 4, 2), 4, 0),
      EmptyShard);
}

TEST_CASE("mismatched feature dimensions are rejected") {
  CHECK_THROWS_AS(
      make_hyperparam_problem(tiny_dataset(10, 4, 1), tiny_dataset(10, 5, 2), 2,
                              0),
      DimensionMismatch);
}

TEST_CASE("stochastic inner gradient is unbiased for the shard sum") {
  const auto problem =
      make_hyperparam_problem(tiny_dataset(30, 3, 7), tiny_dataset(10, 3, 8),
                              3, 0);
  RngStream rng(70);
  Vector x = Vector::Constant(3, 0.5);
  Vector y(3);
  y << 0.2, -0.1, 0.4;

  const int draws = 40000;
  Vector mean = Vector::Zero(3);
  std::vector<Vector> all;
  all.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    const int agent = static_cast<int>(rng.uniform_int(3));
    const Vector s = problem->sample_grad2_g(agent, 1, x, y, rng);
    mean += s;
    all.push_back(s);
  }
  mean /= static_cast<double>(draws);
  Vector var = Vector::Zero(3);
  for (const Vector& s : all) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(draws - 1);

  const Vector exact = problem->grad2_g(1, x, y);
  for (Index i = 0; i < 3; ++i)
    CHECK(std::abs(mean[i] - exact[i]) <=
          5.0 * std::sqrt(var[i] / draws) + 1e-12);
}

TEST_CASE("exact hypergradient matches finite differences for positive x") {
  const auto [train, val] = split_dataset(tiny_dataset(60, 4, 21), 40);
  const auto problem = make_hyperparam_problem(train, val, 3, 0);
  RngStream rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Vector x(4);
    for (Index i = 0; i < 4; ++i) x[i] = std::abs(rng.normal()) + 0.2;
    const Vector exact = exact_hypergradient(*problem, x);
    const Vector fd = fd_hypergradient(*problem, x, 1e-5);
    const double rel = (exact - fd).norm() / std::max(exact.norm(), 1e-12);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("validation loss decreases toward the best response") {
  // Train and validation must come from the same draw.
  const auto [train, val] = split_dataset(tiny_dataset(90, 4, 11), 60);
  const auto problem = make_hyperparam_problem(train, val, 2, 0);
  const Vector x = Vector::Constant(4, 0.5);
  const Vector y_star = problem->best_response(1, x);
  CHECK(problem->validation_loss(y_star) <
        problem->validation_loss(Vector::Zero(4)));
}
