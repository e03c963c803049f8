#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsmo/problems.hpp"

namespace dsmo {

struct RiskAverseOptions {
  int feat_dim = 2;
  int K = 1;
  double kappa = 0.5;  // deviation weight, in [0, 1]
  double lambda = 1.0;
  int p = 2;           // even moment order of the upper semideviation
  Index n_data = 100;
  std::uint64_t seed = 0;
  double label_noise_var = 0.2;
};

/// Regularized mean-deviation risk-averse regression as a strict two-level
/// nesting. With the quadratic utility U_i(x) = -(y_i - x^T w_i)^2 over a
/// fixed data batch split across agents, the maximization objective
///   U(x) - kappa * (mean deviation moment)^{1/p} - lambda/2 ||x||^2
/// is minimized in negated form. Each level's decision vector is augmented
/// with unit-strong-convexity pass-through copies so level m depends only on
/// level m-1:
///   level 1: (a, xc)        a tracks the mean utility, xc copies x
///   level 2: (v, ac, xcc)   v tracks the deviation moment, rest copied
/// The outer objective reads only the carried components. The deviation is
/// the average of per-agent upper semideviations, which is what a
/// per-agent-decomposable nesting can express; the batch optimum exposed as
/// x* solves exactly this objective. The p-th root is smoothed as
/// (max(v,0)+delta)^{1/p} with delta = 1e-6 away from v = 0.
class RiskAverseProblem final : public MultiLevelProblem {
 public:
  RiskAverseProblem(Matrix features, Vector targets, int K, double kappa,
                    double lambda, int p);

  const std::string& tag() const override { return tag_; }
  const ProblemDims& dims() const override { return dims_; }
  const SmoothnessMeta& meta() const override { return meta_; }

  std::pair<Vector, Vector> sample_f_pair(int agent, const VectorRef& x,
                                          const VectorRef& y_M,
                                          RngStream& rng) const override;
  Vector sample_grad2_g(int agent, int level, const VectorRef& y_prev,
                        const VectorRef& y, RngStream& rng) const override;
  Matrix sample_grad12_g(int agent, int level, const VectorRef& y_prev,
                         const VectorRef& y, RngStream& rng) const override;
  Matrix sample_grad22_g(int agent, int level, const VectorRef& y_prev,
                         const VectorRef& y, RngStream& rng) const override;

  Vector grad1_f(const VectorRef& x, const VectorRef& y_M) const override;
  Vector grad2_f(const VectorRef& x, const VectorRef& y_M) const override;
  Vector grad2_g(int level, const VectorRef& y_prev,
                 const VectorRef& y) const override;
  Matrix grad12_g(int level, const VectorRef& y_prev,
                  const VectorRef& y) const override;
  Matrix grad22_g(int level, const VectorRef& y_prev,
                  const VectorRef& y) const override;

  Vector agent_grad1_f(int agent, const VectorRef& x,
                       const VectorRef& y_M) const override;
  Vector agent_grad2_f(int agent, const VectorRef& x,
                       const VectorRef& y_M) const override;

  bool has_exact_oracle() const override { return true; }
  Vector best_response(int level, const VectorRef& y_prev) const override;
  double objective_value(const VectorRef& x) const override;
  std::optional<Vector> x_star() const override { return x_star_; }
  std::optional<double> f_star() const override { return f_star_; }

  /// Batch mean utility over all agents at x.
  double mean_utility(const VectorRef& x) const;
  /// Average per-agent deviation moment at (a, xc).
  double mean_deviation_moment(double a, const VectorRef& xc) const;

 private:
  double utility(Index row, const VectorRef& x) const;
  Vector utility_grad(Index row, const VectorRef& x) const;
  double smooth_root(double v) const;
  double smooth_root_deriv(double v) const;
  void solve_batch_optimum();

  std::string tag_ = "risk_averse";
  ProblemDims dims_;
  SmoothnessMeta meta_;
  Matrix features_;  // one row per data point
  Vector targets_;
  std::vector<std::vector<Index>> shards_;
  double kappa_ = 0.5;
  double lambda_ = 1.0;
  int p_ = 2;
  double delta_ = 1e-6;
  Vector x_star_;
  double f_star_ = 0.0;
};

std::shared_ptr<RiskAverseProblem> make_risk_averse_problem(
    const RiskAverseOptions& options);

}  // namespace dsmo
