#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsmo/errors.hpp"
#include "dsmo/rng.hpp"
#include "dsmo/types.hpp"

namespace dsmo {

/// Shape of a nested problem: an outer decision of dimension d_x and M inner
/// levels of dimensions d[1..M] shared by K agents. Level 0 is the outer
/// decision itself (d_0 == d_x).
struct ProblemDims {
  int M = 1;
  int d_x = 1;
  std::vector<int> d;  // d[0] == d_x, d[m] for level m
  int K = 1;

  int level_dim(int m) const { return d[static_cast<std::size_t>(m)]; }
  void validate() const;
};

/// Smoothness / boundedness metadata per level plus outer bounds. Indexing is
/// 1-based by level: entry m-1 describes level m.
struct SmoothnessMeta {
  std::vector<double> L_g;       // gradient Lipschitz / Hessian upper bound
  std::vector<double> mu_g;      // strong convexity of the mean level
  std::vector<double> kappa_g;   // contraction parameter, in (0, mu/L]
  std::vector<double> Lt_g;      // second-derivative Lipschitz
  std::vector<double> C_g;       // inner gradient second-moment bounds
  std::vector<double> sigma_g;   // inner sampling noise bounds
  double C_f = 0.0;              // outer gradient second-moment bound
  double sigma_f = 0.0;          // outer sampling noise bound

  void validate(int M) const;
};

/// Interface for a decentralized multi-level problem: K agents hold
/// heterogeneous outer objectives f^k(x, y_M) and level objectives
/// g_m^k(y_{m-1}, y_m); the network-wide problem averages them.
///
/// Stochastic oracles draw from the caller-provided stream and are unbiased
/// for the corresponding per-agent mean; averaging over a uniformly random
/// agent gives an unbiased sample of the network mean. Exact oracles return
/// the network mean (over agents, noise-free). Problems are immutable after
/// construction and safe to query concurrently.
class MultiLevelProblem {
 public:
  virtual ~MultiLevelProblem() = default;

  virtual const std::string& tag() const = 0;
  virtual const ProblemDims& dims() const = 0;
  virtual const SmoothnessMeta& meta() const = 0;

  // --- stochastic per-agent oracles -------------------------------------
  virtual Vector sample_grad1_f(int agent, const VectorRef& x,
                                const VectorRef& y_M, RngStream& rng) const;
  virtual Vector sample_grad2_f(int agent, const VectorRef& x,
                                const VectorRef& y_M, RngStream& rng) const;
  /// Both outer partials from a single draw, as one oracle query pair.
  virtual std::pair<Vector, Vector> sample_f_pair(int agent, const VectorRef& x,
                                                  const VectorRef& y_M,
                                                  RngStream& rng) const = 0;
  virtual Vector sample_grad2_g(int agent, int level, const VectorRef& y_prev,
                                const VectorRef& y, RngStream& rng) const = 0;
  virtual Matrix sample_grad12_g(int agent, int level, const VectorRef& y_prev,
                                 const VectorRef& y, RngStream& rng) const = 0;
  virtual Matrix sample_grad22_g(int agent, int level, const VectorRef& y_prev,
                                 const VectorRef& y, RngStream& rng) const = 0;

  // --- exact network-mean oracles ----------------------------------------
  virtual Vector grad1_f(const VectorRef& x, const VectorRef& y_M) const = 0;
  virtual Vector grad2_f(const VectorRef& x, const VectorRef& y_M) const = 0;
  virtual Vector grad2_g(int level, const VectorRef& y_prev,
                         const VectorRef& y) const = 0;
  virtual Matrix grad12_g(int level, const VectorRef& y_prev,
                          const VectorRef& y) const = 0;
  virtual Matrix grad22_g(int level, const VectorRef& y_prev,
                          const VectorRef& y) const = 0;

  // --- per-agent exact means (noise-free), for estimator tests -----------
  virtual Vector agent_grad1_f(int agent, const VectorRef& x,
                               const VectorRef& y_M) const = 0;
  virtual Vector agent_grad2_f(int agent, const VectorRef& x,
                               const VectorRef& y_M) const = 0;

  // --- ground truth (optional) -------------------------------------------
  /// True when best_response / objective_value are available.
  virtual bool has_exact_oracle() const { return false; }
  /// Minimizer of the mean level-m objective given the previous level's
  /// value. Throws NoExactOracle when unavailable.
  virtual Vector best_response(int level, const VectorRef& y_prev) const;
  /// F(x) = mean_k f^k(x, y_M*(x)) with all best responses solved exactly.
  virtual double objective_value(const VectorRef& x) const;
  virtual std::optional<Vector> x_star() const { return std::nullopt; }
  virtual std::optional<double> f_star() const { return std::nullopt; }

  // --- compositional view (inner value map + outer map), for DSGD --------
  virtual bool has_compositional_form() const { return false; }
  /// Dimension of the compositional inner value.
  virtual int compositional_dim() const;
  virtual Vector sample_inner_value(int agent, const VectorRef& x,
                                    RngStream& rng) const;
  /// d_x-by-compositional_dim Jacobian sample of the inner value map.
  virtual Matrix sample_inner_jacobian(int agent, const VectorRef& x,
                                       RngStream& rng) const;
  /// Gradient sample of the outer map at an inner value estimate.
  virtual Vector sample_outer_grad(int agent, const VectorRef& value,
                                   RngStream& rng) const;

  /// Chain of best responses y_1*, ..., y_M* at x. Throws NoExactOracle.
  std::vector<Vector> best_response_chain(const VectorRef& x) const;
};

/// Total derivative of the outer objective through all nested best
/// responses, with every level solved exactly and the Hessian chain applied
/// right-to-left as matrix-vector solves.
Vector exact_hypergradient(const MultiLevelProblem& problem,
                           const VectorRef& x);

/// Central finite differences of F(x) (exact best responses inside), used as
/// the independent check against exact_hypergradient.
Vector fd_hypergradient(const MultiLevelProblem& problem, const VectorRef& x,
                        double step = 1e-5);

}  // namespace dsmo
