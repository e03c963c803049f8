#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsmo/problems.hpp"

namespace dsmo {

/// Randomly generated evaluation environment: per-state features, a row-
/// normalized transition matrix, and per-agent reward means. Sampled rewards
/// are Gaussian around the means.
struct MdpEnvironment {
  Matrix features;                   // |S| x m, entries Unif[0,1]
  Matrix transitions;                // |S| x |S|, rows sum to 1
  std::vector<Matrix> reward_means;  // per agent, |S| x |S|, Unif[0,1]
  double reward_noise_std = 1.0;
  double gamma = 0.9;

  Index num_states() const { return features.rows(); }
  Index feat_dim() const { return features.cols(); }
};

MdpEnvironment make_mdp_environment(int num_states, int feat_dim, double gamma,
                                    int K, std::uint64_t seed);

/// Regularized Bellman-residual minimization as a bilevel problem. The inner
/// decision y holds one entry per state and tracks the residual target
///   target_s(x) = phi_s^T x - E_{s'}[r(s, s') + gamma phi_{s'}^T x | s]
/// through g(x, y) = 1/2 sum_s (target_s(x) - y_s)^2, and the outer objective
/// is f(x, y) = 1/(2|S|) sum_s y_s^2 + lambda/2 ||x||^2. The inner Hessian is
/// the identity, so mu_g = L_g = kappa_g = 1, and x* solves a dense linear
/// system.
///
/// Stochastic queries simulate one transition per state and draw rewards
/// from N(mean, std^2), matching the per-iteration simulation protocol.
class PolicyEvalProblem final : public MultiLevelProblem {
 public:
  PolicyEvalProblem(MdpEnvironment env, double lambda, int K);

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
  Vector best_response(int level, const VectorRef& x) const override;
  double objective_value(const VectorRef& x) const override;
  std::optional<Vector> x_star() const override { return x_star_; }
  std::optional<double> f_star() const override { return f_star_; }

  // Compositional view for the DSGD baseline: the inner value map stacks the
  // residual targets with a pass-through copy of x.
  bool has_compositional_form() const override { return true; }
  int compositional_dim() const override;
  Vector sample_inner_value(int agent, const VectorRef& x,
                            RngStream& rng) const override;
  Matrix sample_inner_jacobian(int agent, const VectorRef& x,
                               RngStream& rng) const override;
  Vector sample_outer_grad(int agent, const VectorRef& value,
                           RngStream& rng) const override;

  const MdpEnvironment& environment() const { return env_; }
  /// Mean residual map: target(x) = D x - r_bar with D = Phi - gamma P Phi.
  const Matrix& residual_matrix() const { return D_; }
  const Vector& expected_reward() const { return r_mean_; }

 private:
  struct TransitionDraw {
    std::vector<Index> next_state;  // one simulated s' per state
    Vector reward;                  // one sampled reward per state
  };
  TransitionDraw simulate(int agent, RngStream& rng) const;
  Vector agent_mean_reward(int agent) const;

  std::string tag_ = "policy_eval";
  ProblemDims dims_;
  SmoothnessMeta meta_;
  MdpEnvironment env_;
  double lambda_ = 1.0;
  Matrix D_;        // Phi - gamma P Phi
  Vector r_mean_;   // expected one-step reward averaged over agents
  Vector x_star_;
  double f_star_ = 0.0;
};

std::shared_ptr<PolicyEvalProblem> make_policy_eval_problem(
    int num_states, int feat_dim, double gamma, double lambda, int K,
    std::uint64_t seed);

}  // namespace dsmo
