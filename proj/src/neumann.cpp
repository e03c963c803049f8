#include "dsmo/neumann.hpp"

namespace dsmo {

Matrix neumann_materialize(const std::vector<Matrix>& hessian_samples,
                           double L_g, Index dim) {
  if (!(L_g > 0.0))
    throw InvalidParam("neumann_materialize: L_g must be positive");
  Matrix q = Matrix::Identity(dim, dim);
  for (const Matrix& v : hessian_samples) {
    if (v.rows() != dim || v.cols() != dim)
      throw DimensionMismatch("neumann_materialize: sample shape mismatch");
    q = Matrix::Identity(dim, dim) +
        (Matrix::Identity(dim, dim) - v / L_g) * q;
  }
  return q / L_g;
}

}  // namespace dsmo
