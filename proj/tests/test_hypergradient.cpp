#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsmo/policy_eval.hpp"
#include "dsmo/rng.hpp"
#include "dsmo/synthetic.hpp"
#include "test_support.hpp"

using namespace dsmo;

namespace {

struct NoOracleProblem final : MultiLevelProblem {
  NoOracleProblem() {
    dims_.M = 1;
    dims_.d_x = 1;
    dims_.d = {1, 1};
    dims_.K = 1;
    meta_.L_g = {1.0};
    meta_.mu_g = {1.0};
    meta_.kappa_g = {1.0};
    meta_.Lt_g = {0.0};
    meta_.C_g = {1.0};
    meta_.sigma_g = {0.0};
  }
  const std::string& tag() const override { return tag_; }
  const ProblemDims& dims() const override { return dims_; }
  const SmoothnessMeta& meta() const override { return meta_; }
  std::pair<Vector, Vector> sample_f_pair(int, const VectorRef& x,
                                          const VectorRef& y,
                                          RngStream&) const override {
    return {x, Vector(y)};
  }
  Vector sample_grad2_g(int, int, const VectorRef&, const VectorRef& y,
                        RngStream&) const override {
    return y;
  }
  Matrix sample_grad12_g(int, int, const VectorRef&, const VectorRef&,
                         RngStream&) const override {
    return Matrix::Identity(1, 1);
  }
  Matrix sample_grad22_g(int, int, const VectorRef&, const VectorRef&,
                         RngStream&) const override {
    return Matrix::Identity(1, 1);
  }
  Vector grad1_f(const VectorRef& x, const VectorRef&) const override {
    return x;
  }
  Vector grad2_f(const VectorRef&, const VectorRef& y) const override {
    return y;
  }
  Vector grad2_g(int, const VectorRef&, const VectorRef& y) const override {
    return y;
  }
  Matrix grad12_g(int, const VectorRef&, const VectorRef&) const override {
    return Matrix::Identity(1, 1);
  }
  Matrix grad22_g(int, const VectorRef&, const VectorRef&) const override {
    return Matrix::Identity(1, 1);
  }
  Vector agent_grad1_f(int, const VectorRef& x, const VectorRef&) const override {
    return x;
  }
  Vector agent_grad2_f(int, const VectorRef&, const VectorRef& y) const override {
    return Vector(y);
  }
  std::string tag_ = "stub";
  ProblemDims dims_;
  SmoothnessMeta meta_;
};

}  // namespace

TEST_CASE("identity instance has gradient 2x") {
  const Matrix I2 = Matrix::Identity(2, 2);
  const auto problem =
      testing::explicit_synthetic({I2}, {I2}, Vector::Zero(2), 1.0);
  Vector x(2);
  x << -3.0, 0.5;
  CHECK((exact_hypergradient(*problem, x) - 2.0 * x).norm() <= 1e-12);
}

TEST_CASE("synthetic M in {1,2,3} matches central differences at 1e-4") {
  RngStream rng(606);
  for (int M : {1, 2, 3}) {
    SyntheticOptions opts;
    opts.M = M;
    opts.d_x = 3;
    opts.inner_dims = std::vector<int>(static_cast<std::size_t>(M), 3);
    opts.K = 4;
    opts.heterogeneity = 0.6;
    opts.noise = 0.2;
    opts.seed = static_cast<std::uint64_t>(100 + M);
    const auto problem = make_synthetic_quadratic(opts);
    for (int trial = 0; trial < 20; ++trial) {
      Vector x(3);
      for (Index i = 0; i < 3; ++i) x[i] = rng.normal();
      const Vector exact = exact_hypergradient(*problem, x);
      const Vector fd = fd_hypergradient(*problem, x, 1e-5);
      const double rel = (exact - fd).norm() / std::max(exact.norm(), 1e-12);
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("policy evaluation at x = 0 matches the explicit quadratic") {
  const auto problem = make_policy_eval_problem(10, 3, 0.85, 1.0, 4, 77);
  const Matrix& D = problem->residual_matrix();
  const Vector& r = problem->expected_reward();
  const double S = 10.0;

  const Vector x0 = Vector::Zero(3);
  const Vector expected = -D.transpose() * r / S;  // lambda x vanishes at 0
  CHECK((exact_hypergradient(*problem, x0) - expected).norm() <= 1e-12);

  // And at a generic point the full quadratic gradient.
  RngStream rng(8);
  Vector x(3);
  for (Index i = 0; i < 3; ++i) x[i] = rng.normal();
  const Vector generic = D.transpose() * (D * x - r) / S + 1.0 * x;
  CHECK((exact_hypergradient(*problem, x) - generic).norm() <= 1e-12);
}

TEST_CASE("problems without exact oracles raise NoExactOracle") {
  NoOracleProblem stub;
  Vector x(1);
  x << 1.0;
  CHECK_FALSE(stub.has_exact_oracle());
  CHECK_THROWS_AS(exact_hypergradient(stub, x), NoExactOracle);
  CHECK_THROWS_AS(stub.best_response(1, x), NoExactOracle);
}
