#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace eventfuse {

using Scalar = double;
using Index = Eigen::Index;

/// Dense row-major matrix. Sequences are stored frames-as-rows, so row-major
/// keeps each frame contiguous.
template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Scalar>;
using Vector = VectorX<Scalar>;
using IndexMatrix = MatrixX<Index>;

}  // namespace eventfuse
