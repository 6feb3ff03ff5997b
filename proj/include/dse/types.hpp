#pragma once

#include <Eigen/Dense>

namespace dse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace dse
