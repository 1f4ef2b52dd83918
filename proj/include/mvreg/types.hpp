#pragma once

#include <Eigen/Core>

#include <vector>

namespace mvreg {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using Matrix6 = Eigen::Matrix<Scalar, 6, 6>;

// Jacobians of an m-vector residual w.r.t. a 6-dof twist.
template <typename Scalar>
using Matrix36 = Eigen::Matrix<Scalar, 3, 6>;
template <typename Scalar>
using Matrix46 = Eigen::Matrix<Scalar, 4, 6>;

using PointCloud = std::vector<Vector3<double>>;

}  // namespace mvreg
