#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>

namespace dnetknn {

// Row-major so that one example (or one code vector) is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Index = std::size_t;

} // namespace dnetknn
