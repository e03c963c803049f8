#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "dsmo/problems.hpp"

namespace dsmo {

/// Construction knobs for the synthetic nested quadratic. Every level is a
/// strongly convex quadratic whose mean Hessian spectrum lies inside
/// [mu, L], so all best responses, the optimum, and the full gradient are
/// available in closed form.
struct SyntheticOptions {
  int M = 1;
  int d_x = 2;
  std::vector<int> inner_dims;  // one entry per level; defaults to d_x each
  int K = 1;
  double heterogeneity = 0.0;  // per-agent deviation scale around the means
  double noise = 0.0;          // sampling noise scale (gradients & Hessians)
  std::uint64_t seed = 0;
  double mu = 0.5;
  double L = 2.0;
  double lambda = 1.0;   // outer ridge coefficient
  double e_scale = 0.3;  // scale of the mean linear offsets
  // Spectral norm of the mean coupling matrices B_m; every singular value
  // equals this, so the composed response map is well conditioned. Must not
  // exceed L (it bounds the cross-Lipschitz constant); 0 picks 0.8 * mu.
  double b_scale = 0.0;
};

/// Nested quadratic testbed:
///   g_m^k(u, v) = 1/2 v^T A_m^k v - v^T B_m^k u + v^T e_m^k
///   f^k(x, y_M) = 1/2 ||y_M - c^k||^2 + lambda/2 ||x||^2
/// Per-agent matrices deviate from shared means with zero sum, so the mean
/// best responses are the affine maps y_m*(u) = A_m^{-1}(B_m u - e_m).
/// Hessian samples are perturbed by bounded symmetric noise and clipped into
/// [mu, L] (the construction margins make clipping a measure-zero event; it
/// is still counted).
class SyntheticQuadratic final : public MultiLevelProblem {
 public:
  struct Level {
    Matrix A_mean;  // d_m x d_m symmetric, spectrum in [mu, L] with margin
    Matrix B_mean;  // d_m x d_{m-1}
    Vector e_mean;
    std::vector<Matrix> A_dev;  // per agent, symmetric, zero sum
    std::vector<Matrix> B_dev;  // per agent, zero sum
    std::vector<Vector> e_dev;  // per agent, zero sum
    double grad_noise = 0.0;    // E||eps||^2 = grad_noise^2
    double cross_noise = 0.0;   // Frobenius scale of cross-Hessian noise
    double hess_noise = 0.0;    // spectral bound of own-Hessian noise
    // Distance of each per-agent Hessian spectrum to mu (lo) and L (hi);
    // filled by the constructor and used as a Weyl certificate so the clip
    // check needs no per-sample eigendecomposition.
    std::vector<std::pair<double, double>> agent_margins;
  };

  SyntheticQuadratic(ProblemDims dims, SmoothnessMeta meta,
                     std::vector<Level> levels, std::vector<Vector> c_agents,
                     double lambda, double f_noise);

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

  /// Composite linear map of the exact best response y_m*(x) = P_m x + p_m.
  const Matrix& response_matrix(int level) const;
  const Vector& response_offset(int level) const;

  long clip_events() const { return clip_events_.load(); }

 private:
  const Level& level(int m) const {
    return levels_[static_cast<std::size_t>(m - 1)];
  }

  std::string tag_ = "synthetic_quadratic";
  ProblemDims dims_;
  SmoothnessMeta meta_;
  std::vector<Level> levels_;
  std::vector<Vector> c_agents_;
  Vector c_mean_;
  double c_spread_ = 0.0;  // 1/(2K) sum ||c^k - c_mean||^2
  double lambda_ = 1.0;
  double f_noise_ = 0.0;
  std::vector<Matrix> response_P_;  // P_1..P_M
  std::vector<Vector> response_p_;
  Vector x_star_;
  double f_star_ = 0.0;
  mutable std::atomic<long> clip_events_{0};
};

std::shared_ptr<SyntheticQuadratic> make_synthetic_quadratic(
    const SyntheticOptions& options);

}  // namespace dsmo
