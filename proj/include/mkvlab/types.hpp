#pragma once

#include <Eigen/Dense>

namespace mkvlab {

/// Largest state dimension supported by the simulators. Small vectors and
/// matrices live on the stack so per-particle evaluations never allocate.
inline constexpr int kMaxDim = 10;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

}  // namespace mkvlab
