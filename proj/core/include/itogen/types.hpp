#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace itogen {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

// Index of a point on a regular simulation grid. Grid times are always
// derived as index * dt so membership checks never compare floats.
using GridIndex = std::size_t;

}  // namespace itogen
