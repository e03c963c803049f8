#include "dsmo/problems.hpp"

namespace dsmo {

void ProblemDims::validate() const {
  if (M < 1) throw InvalidParam("ProblemDims: M must be >= 1");
  if (d_x < 1) throw InvalidParam("ProblemDims: d_x must be >= 1");
  if (K < 1) throw InvalidParam("ProblemDims: K must be >= 1");
  if (static_cast<int>(d.size()) != M + 1)
    throw InvalidParam("ProblemDims: d must hold M+1 entries (d_0..d_M)");
  if (d[0] != d_x) throw InvalidParam("ProblemDims: d_0 must equal d_x");
  for (int dim : d)
    if (dim < 1) throw InvalidParam("ProblemDims: dimensions must be >= 1");
}

void SmoothnessMeta::validate(int M) const {
  const auto m = static_cast<std::size_t>(M);
  if (L_g.size() != m || mu_g.size() != m || kappa_g.size() != m)
    throw InvalidParam("SmoothnessMeta: per-level constants must have M entries");
  for (int i = 0; i < M; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (!(mu_g[s] > 0.0) || !(L_g[s] >= mu_g[s]))
      throw InvalidParam("SmoothnessMeta: need 0 < mu_g <= L_g");
    if (!(kappa_g[s] > 0.0 && kappa_g[s] <= mu_g[s] / L_g[s]))
      throw InvalidParam("SmoothnessMeta: need 0 < kappa_g <= mu_g/L_g");
  }
}

Vector MultiLevelProblem::sample_grad1_f(int agent, const VectorRef& x,
                                         const VectorRef& y_M,
                                         RngStream& rng) const {
  return sample_f_pair(agent, x, y_M, rng).first;
}

Vector MultiLevelProblem::sample_grad2_f(int agent, const VectorRef& x,
                                         const VectorRef& y_M,
                                         RngStream& rng) const {
  return sample_f_pair(agent, x, y_M, rng).second;
}

Vector MultiLevelProblem::best_response(int, const VectorRef&) const {
  throw NoExactOracle(tag() + ": no exact best-response solver");
}

double MultiLevelProblem::objective_value(const VectorRef&) const {
  throw NoExactOracle(tag() + ": no exact objective oracle");
}

int MultiLevelProblem::compositional_dim() const {
  throw NotCompositional(tag() + ": no compositional form");
}

Vector MultiLevelProblem::sample_inner_value(int, const VectorRef&,
                                             RngStream&) const {
  throw NotCompositional(tag() + ": no compositional form");
}

Matrix MultiLevelProblem::sample_inner_jacobian(int, const VectorRef&,
                                                RngStream&) const {
  throw NotCompositional(tag() + ": no compositional form");
}

Vector MultiLevelProblem::sample_outer_grad(int, const VectorRef&,
                                            RngStream&) const {
  throw NotCompositional(tag() + ": no compositional form");
}

std::vector<Vector> MultiLevelProblem::best_response_chain(
    const VectorRef& x) const {
  if (!has_exact_oracle())
    throw NoExactOracle(tag() + ": no exact best-response solver");
  std::vector<Vector> chain;
  chain.reserve(static_cast<std::size_t>(dims().M));
  Vector prev = x;
  for (int m = 1; m <= dims().M; ++m) {
    prev = best_response(m, prev);
    chain.push_back(prev);
  }
  return chain;
}

Vector exact_hypergradient(const MultiLevelProblem& problem,
                           const VectorRef& x) {
  if (!problem.has_exact_oracle())
    throw NoExactOracle(problem.tag() + ": no exact best-response solver");
  const int M = problem.dims().M;

  // inputs[m] is the exact value entering level m+1: x, y_1*, ..., y_M*.
  std::vector<Vector> inputs;
  inputs.reserve(static_cast<std::size_t>(M + 1));
  inputs.emplace_back(x);
  for (const Vector& y : problem.best_response_chain(x)) inputs.push_back(y);
  const Vector& y_M = inputs.back();

  // w picks up one sign flip per level, which realizes the (-1)^M factor.
  Vector w = problem.grad2_f(x, y_M);
  for (int m = M; m >= 1; --m) {
    const Vector& y_prev = inputs[static_cast<std::size_t>(m - 1)];
    const Vector& y = inputs[static_cast<std::size_t>(m)];
    const Matrix hess = problem.grad22_g(m, y_prev, y);
    const Vector solved = hess.ldlt().solve(w);
    w = -(problem.grad12_g(m, y_prev, y) * solved);
  }
  return problem.grad1_f(x, y_M) + w;
}

Vector fd_hypergradient(const MultiLevelProblem& problem, const VectorRef& x,
                        double step) {
  const Index d = x.size();
  Vector grad(d);
  Vector probe = x;
  for (Index i = 0; i < d; ++i) {
    const double base = probe[i];
    probe[i] = base + step;
    const double hi = problem.objective_value(probe);
    probe[i] = base - step;
    const double lo = problem.objective_value(probe);
    probe[i] = base;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

}  // namespace dsmo
