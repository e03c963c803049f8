#pragma once

#include <vector>

#include "dsmo/errors.hpp"
#include "dsmo/types.hpp"

namespace dsmo {

/// Applies the truncated-series Hessian-inverse estimator built from b
/// sampled Hessians to a vector:
///   Q_0 = I,  Q_i = I + (I - v_i / L) Q_{i-1},  result = Q_b w / L,
/// carried as the vector recursion w_i = w + (I - v_i/L) w_{i-1}. Costs
/// O(b d^2) instead of the O(b d^3) matrix form.
template <typename MatT, typename VecT>
VecT neumann_apply(const std::vector<MatT>& hessian_samples, double L_g,
                   const VecT& w) {
  if (!(L_g > 0.0)) throw InvalidParam("neumann_apply: L_g must be positive");
  VecT acc = w;
  for (const MatT& v : hessian_samples) {
    if (v.rows() != w.size() || v.cols() != w.size())
      throw DimensionMismatch("neumann_apply: Hessian sample shape mismatch");
    acc = w + acc - v * acc / L_g;
  }
  return acc / L_g;
}

/// Materialized Q_b / L for the brute-force equivalence check (debug only;
/// never used in the round hot path).
Matrix neumann_materialize(const std::vector<Matrix>& hessian_samples,
                           double L_g, Index dim);

}  // namespace dsmo
