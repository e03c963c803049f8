#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace dsmo {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using VectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<const Matrix>;

using Index = Eigen::Index;

}  // namespace dsmo
