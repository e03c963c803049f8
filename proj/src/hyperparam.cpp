#include "dsmo/hyperparam.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace dsmo {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::vector<Index>> round_robin(Index n, int K) {
  std::vector<std::vector<Index>> shards(static_cast<std::size_t>(K));
  for (Index i = 0; i < n; ++i)
    shards[static_cast<std::size_t>(i % K)].push_back(i);
  return shards;
}

}  // namespace

HyperparamProblem::HyperparamProblem(Dataset train, Dataset val, int K,
                                     std::uint64_t seed, double mu_hint)
    : train_(std::move(train)), val_(std::move(val)), seed_(seed) {
  if (K < 1) throw InvalidParam("hyperparam: K must be >= 1");
  if (train_.size() == 0 || val_.size() == 0)
    throw InvalidParam("hyperparam: datasets must be nonempty");
  if (train_.dim() != val_.dim())
    throw DimensionMismatch("hyperparam: train/val feature dims differ");
  if (train_.size() < K || val_.size() < K)
    throw EmptyShard("hyperparam: K exceeds dataset size");

  const int d = static_cast<int>(train_.dim());
  dims_.M = 1;
  dims_.d_x = d;
  dims_.d = {d, d};
  dims_.K = K;

  train_shards_ = round_robin(train_.size(), K);
  val_shards_ = round_robin(val_.size(), K);

  // Declared constants assume hyperparameters stay in a moderate box; the
  // sigmoid's curvature factor is bounded by 1/(6 sqrt(3)).
  double max_feat_sq = 0.0;
  for (Index i = 0; i < train_.size(); ++i)
    max_feat_sq = std::max(max_feat_sq, train_.features.row(i).squaredNorm());
  Index max_shard = 0;
  for (const auto& s : train_shards_)
    max_shard = std::max<Index>(max_shard, static_cast<Index>(s.size()));
  const double x_cap = 1.0;
  const double L =
      static_cast<double>(max_shard) * 0.0963 * max_feat_sq + x_cap;

  meta_.L_g = {L};
  meta_.mu_g = {mu_hint};
  meta_.kappa_g = {mu_hint / L};
  meta_.Lt_g = {static_cast<double>(max_shard) * 0.1 *
                std::pow(max_feat_sq, 1.5)};
  meta_.C_g = {static_cast<double>(max_shard) * std::sqrt(max_feat_sq) + 1.0};
  meta_.sigma_g = {static_cast<double>(max_shard) * std::sqrt(max_feat_sq)};
  meta_.C_f = static_cast<double>(val_.size()) * std::sqrt(max_feat_sq);
  meta_.sigma_f = meta_.C_f;
  meta_.validate(1);
}

double HyperparamProblem::loss(Index row, const Dataset& data,
                               const VectorRef& y) const {
  const double s = data.labels[row] == 1.0 ? 1.0 : -1.0;
  return sigmoid(-s * data.features.row(row).dot(y));
}

Vector HyperparamProblem::loss_grad(Index row, const Dataset& data,
                                    const VectorRef& y) const {
  const double s = data.labels[row] == 1.0 ? 1.0 : -1.0;
  const double z = -s * data.features.row(row).dot(y);
  const double sig = sigmoid(z);
  return (-s * sig * (1.0 - sig)) * data.features.row(row).transpose();
}

Matrix HyperparamProblem::loss_hess(Index row, const Dataset& data,
                                    const VectorRef& y) const {
  const double s = data.labels[row] == 1.0 ? 1.0 : -1.0;
  const double z = -s * data.features.row(row).dot(y);
  const double sig = sigmoid(z);
  const double curv = sig * (1.0 - sig) * (1.0 - 2.0 * sig);  // s^2 == 1
  return curv * data.features.row(row).transpose() * data.features.row(row);
}

std::pair<Vector, Vector> HyperparamProblem::sample_f_pair(
    int agent, const VectorRef& x, const VectorRef& y, RngStream& rng) const {
  const auto& shard = val_shards_[static_cast<std::size_t>(agent)];
  const Index row = shard[static_cast<std::size_t>(
      rng.uniform_int(static_cast<long>(shard.size())))];
  const double n = static_cast<double>(shard.size());
  return {Vector::Zero(x.size()), n * loss_grad(row, val_, y)};
}

Vector HyperparamProblem::sample_grad2_g(int agent, int /*level*/,
                                         const VectorRef& x,
                                         const VectorRef& y,
                                         RngStream& rng) const {
  const auto& shard = train_shards_[static_cast<std::size_t>(agent)];
  const Index row = shard[static_cast<std::size_t>(
      rng.uniform_int(static_cast<long>(shard.size())))];
  const double n = static_cast<double>(shard.size());
  return n * loss_grad(row, train_, y) + x.cwiseProduct(y);
}

Matrix HyperparamProblem::sample_grad12_g(int /*agent*/, int /*level*/,
                                          const VectorRef& /*x*/,
                                          const VectorRef& y,
                                          RngStream& /*rng*/) const {
  return Matrix(y.asDiagonal());  // d^2 g / dx dy is data-independent
}

Matrix HyperparamProblem::sample_grad22_g(int agent, int /*level*/,
                                          const VectorRef& x,
                                          const VectorRef& y,
                                          RngStream& rng) const {
  const auto& shard = train_shards_[static_cast<std::size_t>(agent)];
  const Index row = shard[static_cast<std::size_t>(
      rng.uniform_int(static_cast<long>(shard.size())))];
  const double n = static_cast<double>(shard.size());
  Matrix h = n * loss_hess(row, train_, y);
  h.diagonal() += x;
  return h;
}

Vector HyperparamProblem::grad1_f(const VectorRef& x,
                                  const VectorRef& /*y*/) const {
  return Vector::Zero(x.size());
}

Vector HyperparamProblem::grad2_f(const VectorRef& /*x*/,
                                  const VectorRef& y) const {
  Vector g = Vector::Zero(y.size());
  for (Index i = 0; i < val_.size(); ++i) g += loss_grad(i, val_, y);
  return g / static_cast<double>(dims_.K);
}

Vector HyperparamProblem::grad2_g(int /*level*/, const VectorRef& x,
                                  const VectorRef& y) const {
  Vector g = Vector::Zero(y.size());
  for (Index i = 0; i < train_.size(); ++i) g += loss_grad(i, train_, y);
  return g / static_cast<double>(dims_.K) + x.cwiseProduct(y);
}

Matrix HyperparamProblem::grad12_g(int /*level*/, const VectorRef& /*x*/,
                                   const VectorRef& y) const {
  return Matrix(y.asDiagonal());
}

Matrix HyperparamProblem::grad22_g(int /*level*/, const VectorRef& x,
                                   const VectorRef& y) const {
  Matrix h = Matrix::Zero(y.size(), y.size());
  for (Index i = 0; i < train_.size(); ++i) h += loss_hess(i, train_, y);
  h /= static_cast<double>(dims_.K);
  h.diagonal() += x;
  return h;
}

Vector HyperparamProblem::agent_grad1_f(int /*agent*/, const VectorRef& x,
                                        const VectorRef& /*y*/) const {
  return Vector::Zero(x.size());
}

Vector HyperparamProblem::agent_grad2_f(int agent, const VectorRef& /*x*/,
                                        const VectorRef& y) const {
  Vector g = Vector::Zero(y.size());
  for (Index i : val_shards_[static_cast<std::size_t>(agent)])
    g += loss_grad(i, val_, y);
  return g;
}

Vector HyperparamProblem::best_response(int /*level*/,
                                        const VectorRef& x) const {
  // Damped Newton on the mean inner objective; exact where the regularizer
  // keeps the Hessian positive definite.
  Vector y = Vector::Zero(x.size());
  for (int iter = 0; iter < 200; ++iter) {
    const Vector g = grad2_g(1, x, y);
    if (g.norm() <= 1e-13 * std::max(1.0, y.norm())) return y;
    Matrix h = grad22_g(1, x, y);
    Eigen::LDLT<Matrix> ldlt(h);
    double shift = 1e-10;
    while (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      h.diagonal().array() += shift;
      shift *= 10.0;
      ldlt.compute(h);
      if (shift > 1e6)
        throw NoExactOracle("hyperparam: inner Newton solve failed "
                            "(non-convex regime)");
    }
    const Vector step = ldlt.solve(g);
    // Inside the quadratic-convergence basin the full step is safe and the
    // Armijo test would stall on rounding noise.
    if (g.norm() < 1e-6 * std::max(1.0, y.norm())) {
      y -= step;
      continue;
    }
    // Backtracking on the mean inner objective value.
    auto inner_value = [&](const Vector& yy) {
      double v = 0.0;
      for (Index i = 0; i < train_.size(); ++i) v += loss(i, train_, yy);
      v /= static_cast<double>(dims_.K);
      return v + 0.5 * x.dot(yy.cwiseProduct(yy));
    };
    const double base = inner_value(y);
    double alpha = 1.0;
    Vector trial = y - alpha * step;
    int backtracks = 0;
    while (inner_value(trial) > base - 1e-4 * alpha * g.dot(step) &&
           backtracks < 60) {
      alpha *= 0.5;
      trial = y - alpha * step;
      ++backtracks;
    }
    y = trial;
  }
  const Vector g = grad2_g(1, x, y);
  if (g.norm() > 1e-8 * std::max(1.0, y.norm()))
    throw NoExactOracle("hyperparam: inner Newton solve did not converge");
  return y;
}

double HyperparamProblem::objective_value(const VectorRef& x) const {
  const Vector y = best_response(1, x);
  double v = 0.0;
  for (Index i = 0; i < val_.size(); ++i) v += loss(i, val_, y);
  return v / static_cast<double>(dims_.K);
}

double HyperparamProblem::validation_loss(const VectorRef& y) const {
  double v = 0.0;
  for (Index i = 0; i < val_.size(); ++i) v += loss(i, val_, y);
  return v / static_cast<double>(val_.size());
}

std::shared_ptr<HyperparamProblem> make_hyperparam_problem(
    Dataset train, Dataset val, int K, std::uint64_t seed, double mu_hint) {
  return std::make_shared<HyperparamProblem>(std::move(train), std::move(val),
                                             K, seed, mu_hint);
}

}  // namespace dsmo
