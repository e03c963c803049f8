#include "dsmo/risk_averse.hpp"

#include <cmath>

namespace dsmo {
namespace {

double pospow(double z, int p) {
  return z > 0.0 ? std::pow(z, p) : 0.0;
}

}  // namespace

RiskAverseProblem::RiskAverseProblem(Matrix features, Vector targets, int K,
                                     double kappa, double lambda, int p)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      kappa_(kappa),
      lambda_(lambda),
      p_(p) {
  if (!(kappa_ >= 0.0 && kappa_ <= 1.0))
    throw InvalidParam("risk_averse: kappa must lie in [0, 1]");
  if (!(lambda_ > 0.0)) throw InvalidParam("risk_averse: lambda must be > 0");
  if (p_ < 2 || p_ % 2 != 0)
    throw InvalidParam("risk_averse: p must be an even integer >= 2");
  if (features_.rows() != targets_.size())
    throw DimensionMismatch("risk_averse: features/targets length mismatch");
  if (features_.rows() < K)
    throw EmptyShard("risk_averse: K exceeds batch size");

  const int d = static_cast<int>(features_.cols());
  dims_.M = 2;
  dims_.d_x = d;
  dims_.d = {d, 1 + d, 2 + d};
  dims_.K = K;

  shards_.assign(static_cast<std::size_t>(K), {});
  for (Index i = 0; i < features_.rows(); ++i)
    shards_[static_cast<std::size_t>(i % K)].push_back(i);

  // Both level Hessians in their own variable are exactly the identity.
  meta_.L_g = {1.0, 1.0};
  meta_.mu_g = {1.0, 1.0};
  meta_.kappa_g = {1.0, 1.0};
  double max_u = 0.0;
  for (Index i = 0; i < features_.rows(); ++i)
    max_u = std::max(max_u, targets_[i] * targets_[i]);
  meta_.Lt_g = {2.0, 2.0 * p_};
  meta_.C_g = {1.0 + max_u, 1.0 + std::pow(4.0 * max_u + 4.0, p_)};
  meta_.sigma_g = meta_.C_g;
  meta_.C_f = 1.0 + kappa_ + lambda_;
  meta_.sigma_f = 0.0;
  meta_.validate(2);

  solve_batch_optimum();
}

double RiskAverseProblem::utility(Index row, const VectorRef& x) const {
  const double r = targets_[row] - features_.row(row).dot(x);
  return -r * r;
}

Vector RiskAverseProblem::utility_grad(Index row, const VectorRef& x) const {
  const double r = targets_[row] - features_.row(row).dot(x);
  return 2.0 * r * features_.row(row).transpose();
}

double RiskAverseProblem::smooth_root(double v) const {
  return std::pow(std::max(v, 0.0) + delta_, 1.0 / p_);
}

double RiskAverseProblem::smooth_root_deriv(double v) const {
  if (v <= 0.0) return 0.0;
  return (1.0 / p_) * std::pow(v + delta_, 1.0 / p_ - 1.0);
}

double RiskAverseProblem::mean_utility(const VectorRef& x) const {
  double total = 0.0;
  for (const auto& shard : shards_) {
    double s = 0.0;
    for (Index i : shard) s += utility(i, x);
    total += s / static_cast<double>(shard.size());
  }
  return total / static_cast<double>(shards_.size());
}

double RiskAverseProblem::mean_deviation_moment(double a,
                                                const VectorRef& xc) const {
  double total = 0.0;
  for (const auto& shard : shards_) {
    double s = 0.0;
    for (Index i : shard) s += pospow(a - utility(i, xc), p_);
    total += s / static_cast<double>(shard.size());
  }
  return total / static_cast<double>(shards_.size());
}

std::pair<Vector, Vector> RiskAverseProblem::sample_f_pair(
    int /*agent*/, const VectorRef& x, const VectorRef& y2,
    RngStream& /*rng*/) const {
  // f reads only the carried components; both partials are deterministic.
  const double v = y2[0];
  Vector g2(y2.size());
  g2[0] = kappa_ * smooth_root_deriv(v);
  g2[1] = -1.0;
  g2.tail(y2.size() - 2) = lambda_ * y2.tail(y2.size() - 2);
  return {Vector::Zero(x.size()), std::move(g2)};
}

Vector RiskAverseProblem::sample_grad2_g(int agent, int level,
                                         const VectorRef& y_prev,
                                         const VectorRef& y,
                                         RngStream& rng) const {
  const auto& shard = shards_[static_cast<std::size_t>(agent)];
  const Index row = shard[static_cast<std::size_t>(
      rng.uniform_int(static_cast<long>(shard.size())))];
  Vector g(y.size());
  if (level == 1) {
    // y_prev = x, y = (a, xc)
    g[0] = y[0] - utility(row, y_prev);
    g.tail(y.size() - 1) = y.tail(y.size() - 1) - y_prev;
  } else {
    // y_prev = (a, xc), y = (v, ac, xcc)
    const double a = y_prev[0];
    const auto xc = y_prev.tail(y_prev.size() - 1);
    g[0] = y[0] - pospow(a - utility(row, xc), p_);
    g[1] = y[1] - a;
    g.tail(y.size() - 2) = y.tail(y.size() - 2) - xc;
  }
  return g;
}

Matrix RiskAverseProblem::sample_grad12_g(int agent, int level,
                                          const VectorRef& y_prev,
                                          const VectorRef& y,
                                          RngStream& rng) const {
  const auto& shard = shards_[static_cast<std::size_t>(agent)];
  const Index row = shard[static_cast<std::size_t>(
      rng.uniform_int(static_cast<long>(shard.size())))];
  const int d = dims_.d_x;
  Matrix cross = Matrix::Zero(y_prev.size(), y.size());
  if (level == 1) {
    // rows: x; cols: (a, xc)
    cross.col(0) = -utility_grad(row, y_prev);
    cross.rightCols(d) = -Matrix::Identity(d, d);
  } else {
    // rows: (a, xc); cols: (v, ac, xcc)
    const double a = y_prev[0];
    const auto xc = y_prev.tail(y_prev.size() - 1);
    const double z = a - utility(row, xc);
    const double dpow = p_ * (z > 0.0 ? std::pow(z, p_ - 1) : 0.0);
    cross(0, 0) = -dpow;
    cross(0, 1) = -1.0;
    cross.col(0).tail(d) = dpow * utility_grad(row, xc);
    cross.block(1, 2, d, d) = -Matrix::Identity(d, d);
  }
  return cross;
}

Matrix RiskAverseProblem::sample_grad22_g(int /*agent*/, int level,
                                          const VectorRef& /*y_prev*/,
                                          const VectorRef& /*y*/,
                                          RngStream& /*rng*/) const {
  const Index dm = dims_.level_dim(level);
  return Matrix::Identity(dm, dm);
}

Vector RiskAverseProblem::grad1_f(const VectorRef& x,
                                  const VectorRef& /*y2*/) const {
  return Vector::Zero(x.size());
}

Vector RiskAverseProblem::grad2_f(const VectorRef& /*x*/,
                                  const VectorRef& y2) const {
  const double v = y2[0];
  Vector g(y2.size());
  g[0] = kappa_ * smooth_root_deriv(v);
  g[1] = -1.0;
  g.tail(y2.size() - 2) = lambda_ * y2.tail(y2.size() - 2);
  return g;
}

Vector RiskAverseProblem::grad2_g(int level, const VectorRef& y_prev,
                                  const VectorRef& y) const {
  Vector g(y.size());
  if (level == 1) {
    g[0] = y[0] - mean_utility(y_prev);
    g.tail(y.size() - 1) = y.tail(y.size() - 1) - y_prev;
  } else {
    const double a = y_prev[0];
    const auto xc = y_prev.tail(y_prev.size() - 1);
    g[0] = y[0] - mean_deviation_moment(a, xc);
    g[1] = y[1] - a;
    g.tail(y.size() - 2) = y.tail(y.size() - 2) - xc;
  }
  return g;
}

Matrix RiskAverseProblem::grad12_g(int level, const VectorRef& y_prev,
                                   const VectorRef& y) const {
  const int d = dims_.d_x;
  Matrix cross = Matrix::Zero(y_prev.size(), y.size());
  if (level == 1) {
    Vector mean_grad = Vector::Zero(d);
    for (const auto& shard : shards_) {
      Vector s = Vector::Zero(d);
      for (Index i : shard) s += utility_grad(i, y_prev);
      mean_grad += s / static_cast<double>(shard.size());
    }
    mean_grad /= static_cast<double>(shards_.size());
    cross.col(0) = -mean_grad;
    cross.rightCols(d) = -Matrix::Identity(d, d);
  } else {
    const double a = y_prev[0];
    const auto xc = y_prev.tail(y_prev.size() - 1);
    double mean_dpow = 0.0;
    Vector mean_cross = Vector::Zero(d);
    for (const auto& shard : shards_) {
      double sd = 0.0;
      Vector sc = Vector::Zero(d);
      for (Index i : shard) {
        const double z = a - utility(i, xc);
        const double dpow = p_ * (z > 0.0 ? std::pow(z, p_ - 1) : 0.0);
        sd += dpow;
        sc += dpow * utility_grad(i, xc);
      }
      mean_dpow += sd / static_cast<double>(shard.size());
      mean_cross += sc / static_cast<double>(shard.size());
    }
    mean_dpow /= static_cast<double>(shards_.size());
    mean_cross /= static_cast<double>(shards_.size());
    cross(0, 0) = -mean_dpow;
    cross(0, 1) = -1.0;
    cross.col(0).tail(d) = mean_cross;
    cross.block(1, 2, d, d) = -Matrix::Identity(d, d);
  }
  return cross;
}

Matrix RiskAverseProblem::grad22_g(int level, const VectorRef& /*y_prev*/,
                                   const VectorRef& /*y*/) const {
  const Index dm = dims_.level_dim(level);
  return Matrix::Identity(dm, dm);
}

Vector RiskAverseProblem::agent_grad1_f(int /*agent*/, const VectorRef& x,
                                        const VectorRef& /*y2*/) const {
  return Vector::Zero(x.size());
}

Vector RiskAverseProblem::agent_grad2_f(int /*agent*/, const VectorRef& x,
                                        const VectorRef& y2) const {
  return grad2_f(x, y2);
}

Vector RiskAverseProblem::best_response(int level,
                                        const VectorRef& y_prev) const {
  if (level == 1) {
    Vector y(1 + dims_.d_x);
    y[0] = mean_utility(y_prev);
    y.tail(dims_.d_x) = y_prev;
    return y;
  }
  const double a = y_prev[0];
  const auto xc = y_prev.tail(y_prev.size() - 1);
  Vector y(2 + dims_.d_x);
  y[0] = mean_deviation_moment(a, xc);
  y[1] = a;
  y.tail(dims_.d_x) = xc;
  return y;
}

double RiskAverseProblem::objective_value(const VectorRef& x) const {
  const double a = mean_utility(x);
  const double v = mean_deviation_moment(a, x);
  return -a + kappa_ * smooth_root(v) + 0.5 * lambda_ * x.squaredNorm();
}

void RiskAverseProblem::solve_batch_optimum() {
  // Armijo gradient descent on the lambda-strongly-convex batch objective.
  Vector x = Vector::Zero(dims_.d_x);
  double value = objective_value(x);
  for (int iter = 0; iter < 20000; ++iter) {
    const Vector g = exact_hypergradient(*this, x);
    if (g.lpNorm<Eigen::Infinity>() <= 1e-12) break;
    double step = 1.0;
    Vector trial = x - step * g;
    double trial_value = objective_value(trial);
    int backtracks = 0;
    while (trial_value > value - 1e-4 * step * g.squaredNorm() &&
           backtracks < 80) {
      step *= 0.5;
      trial = x - step * g;
      trial_value = objective_value(trial);
      ++backtracks;
    }
    x = trial;
    value = trial_value;
  }
  x_star_ = x;
  f_star_ = value;
}

std::shared_ptr<RiskAverseProblem> make_risk_averse_problem(
    const RiskAverseOptions& options) {
  if (options.feat_dim < 1)
    throw InvalidParam("risk_averse: feat_dim must be >= 1");
  if (options.n_data < 1)
    throw InvalidParam("risk_averse: n_data must be >= 1");
  RngStream rng(derive_key(options.seed,
                           {static_cast<std::uint64_t>(RngPurpose::ProblemData),
                            0x517AULL}));
  Vector ground_truth(options.feat_dim);
  for (Index j = 0; j < options.feat_dim; ++j) ground_truth[j] = rng.uniform();

  Matrix features(options.n_data, options.feat_dim);
  Vector targets(options.n_data);
  const double eps_std = std::sqrt(options.label_noise_var);
  for (Index i = 0; i < options.n_data; ++i) {
    for (Index j = 0; j < options.feat_dim; ++j)
      features(i, j) = rng.normal();
    targets[i] = features.row(i).dot(ground_truth) + eps_std * rng.normal();
  }
  return std::make_shared<RiskAverseProblem>(std::move(features),
                                             std::move(targets), options.K,
                                             options.kappa, options.lambda,
                                             options.p);
}

}  // namespace dsmo
