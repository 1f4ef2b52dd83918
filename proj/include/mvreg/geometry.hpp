#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "mvreg/errors.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// Skew-symmetric matrix such that hat(a) * b == a.cross(b).
template <typename Derived>
Matrix3<typename Derived::Scalar> hat(const Eigen::MatrixBase<Derived>& v) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3);
  using S = typename Derived::Scalar;
  Matrix3<S> m;
  m << S(0), -v(2), v(1),  //
      v(2), S(0), -v(0),   //
      -v(1), v(0), S(0);
  return m;
}

/// Inverse of hat() on skew-symmetric matrices.
template <typename Derived>
Vector3<typename Derived::Scalar> vee(const Eigen::MatrixBase<Derived>& m) {
  EIGEN_STATIC_ASSERT_MATRIX_SPECIFIC_SIZE(Derived, 3, 3);
  return Vector3<typename Derived::Scalar>(m(2, 1), m(0, 2), m(1, 0));
}

/// Rigid transform: x_world = rotation * x_local + translation.
///
/// Twist convention throughout the library: xi = [omega, rho] with the
/// rotational part (radians) first and the translational part (meters)
/// last. All pose Jacobians use the right-perturbation T <- T * exp(hat(dxi)).
template <typename Scalar>
struct Pose {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  static Pose Identity() { return Pose{}; }

  Pose operator*(const Pose& rhs) const {
    return Pose{rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  Pose inverse() const {
    Matrix3<Scalar> rt = rotation.transpose();
    return Pose{rt, -(rt * translation)};
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& x) const { return rotation * x + translation; }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template block<3, 3>(0, 0) = rotation;
    m.template block<3, 1>(0, 3) = translation;
    return m;
  }
};

using Posed = Pose<double>;
using Twistd = Vector6<double>;

template <typename Scalar>
Vector3<Scalar> transform_point(const Pose<Scalar>& p, const Vector3<Scalar>& x) {
  return p.rotation * x + p.translation;
}

namespace detail {

// Coefficients of the Rodrigues exponential and the left Jacobian:
//   R = I + A hat(w) + B hat(w)^2,  V = I + B hat(w) + C hat(w)^2,
//   V^-1 = I - hat(w)/2 + D hat(w)^2.
template <typename S>
struct So3Coeffs {
  S a, b, c, d;
};

template <typename S>
So3Coeffs<S> so3_coeffs(S theta) {
  So3Coeffs<S> k;
  const S t2 = theta * theta;
  if (theta < S(1e-9)) {
    k.a = S(1) - t2 / S(6);
    k.b = S(0.5) - t2 / S(24);
    k.c = S(1) / S(6) - t2 / S(120);
    k.d = S(1) / S(12) + t2 / S(720);
    return k;
  }
  const S s = std::sin(theta);
  const S half_s = std::sin(theta / S(2));
  k.a = s / theta;
  k.b = S(2) * half_s * half_s / t2;  // (1 - cos) / theta^2, cancellation-free
  if (theta < S(1e-4)) {
    k.c = S(1) / S(6) - t2 / S(120) + t2 * t2 / S(5040);
    k.d = S(1) / S(12) + t2 / S(720) + t2 * t2 / S(30240);
  } else {
    k.c = (theta - s) / (t2 * theta);
    k.d = (S(1) - k.a / (S(2) * k.b)) / t2;
  }
  return k;
}

}  // namespace detail

/// Closed-form exponential map se(3) -> SE(3).
template <typename Scalar>
Pose<Scalar> exp_se3(const Vector6<Scalar>& xi) {
  const Vector3<Scalar> omega = xi.template head<3>();
  const Vector3<Scalar> rho = xi.template tail<3>();
  const Scalar theta = omega.norm();
  const auto k = detail::so3_coeffs(theta);
  const Matrix3<Scalar> w = hat(omega);
  const Matrix3<Scalar> w2 = w * w;
  Pose<Scalar> p;
  p.rotation = Matrix3<Scalar>::Identity() + k.a * w + k.b * w2;
  const Matrix3<Scalar> v = Matrix3<Scalar>::Identity() + k.b * w + k.c * w2;
  p.translation = v * rho;
  return p;
}

/// Principal-branch logarithm SE(3) -> se(3). Throws AngleNearPi within
/// 1e-6 of the branch cut.
template <typename Scalar>
Vector6<Scalar> log_se3(const Pose<Scalar>& p) {
  const Scalar tr = p.rotation.trace();
  const Scalar cos_theta = std::clamp((tr - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  const Scalar theta = std::acos(cos_theta);
  constexpr Scalar kPi = Scalar(EIGEN_PI);
  if (theta > kPi - Scalar(1e-6)) {
    throw AngleNearPi("log_se3: rotation angle within 1e-6 of pi");
  }
  // omega = theta / (2 sin theta) * vee(R - R^T)
  Scalar factor;
  if (theta < Scalar(1e-9)) {
    factor = Scalar(0.5) + theta * theta / Scalar(12);
  } else {
    factor = theta / (Scalar(2) * std::sin(theta));
  }
  const Vector3<Scalar> omega = factor * vee(Matrix3<Scalar>(p.rotation - p.rotation.transpose()));
  const auto k = detail::so3_coeffs(theta);
  const Matrix3<Scalar> w = hat(omega);
  const Matrix3<Scalar> v_inv = Matrix3<Scalar>::Identity() - Scalar(0.5) * w + k.d * (w * w);
  Vector6<Scalar> xi;
  xi.template head<3>() = omega;
  xi.template tail<3>() = v_inv * p.translation;
  return xi;
}

/// Geodesic rotation angle of an orthonormal matrix, in radians. The atan2
/// form keeps full precision near identity, where acos alone floors out
/// around 1e-8.
template <typename Derived>
typename Derived::Scalar rotation_angle(const Eigen::MatrixBase<Derived>& r) {
  EIGEN_STATIC_ASSERT_MATRIX_SPECIFIC_SIZE(Derived, 3, 3);
  using S = typename Derived::Scalar;
  const Matrix3<S> m = r;
  const S sin_theta = S(0.5) * vee(Matrix3<S>(m - m.transpose())).norm();
  const S cos_theta = (m.trace() - S(1)) / S(2);
  return std::atan2(std::min(sin_theta, S(1)), cos_theta);
}

/// Eigendecomposition of a symmetric 3x3 matrix with eigenvalues in
/// descending order and a deterministic proper-rotation basis.
template <typename Scalar>
struct EigenDecomp {
  Matrix3<Scalar> rotation_basis;  // columns are eigenvectors, det = +1
  Vector3<Scalar> eigenvalues;     // lambda1 >= lambda2 >= lambda3

  Matrix3<Scalar> reconstruct() const {
    return rotation_basis * eigenvalues.asDiagonal() * rotation_basis.transpose();
  }
};

using EigenDecompd = EigenDecomp<double>;

namespace detail {

// Deterministic sign: non-negative dot with e_z, tie-broken by e_y then e_x.
template <typename S>
S column_sign(const Vector3<S>& v) {
  for (int axis = 2; axis >= 0; --axis) {
    if (std::abs(v(axis)) > S(1e-9)) return v(axis) < S(0) ? S(-1) : S(1);
  }
  return S(1);
}

}  // namespace detail

/// Sorted eigendecomposition per the library convention. The input must be
/// symmetric within 1e-9 relative (Frobenius), otherwise NotSymmetric.
template <typename Derived>
EigenDecomp<typename Derived::Scalar> sorted_eigendecomposition(const Eigen::MatrixBase<Derived>& m_in) {
  EIGEN_STATIC_ASSERT_MATRIX_SPECIFIC_SIZE(Derived, 3, 3);
  using S = typename Derived::Scalar;
  const Matrix3<S> m = m_in;
  if ((m - m.transpose()).norm() > S(1e-9) * m.norm()) {
    throw NotSymmetric("sorted_eigendecomposition: input asymmetry exceeds 1e-9 relative");
  }
  const Matrix3<S> sym = S(0.5) * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix3<S>> solver(sym);

  EigenDecomp<S> d;
  // Eigen sorts ascending; flip to descending.
  d.eigenvalues = solver.eigenvalues().reverse();
  Matrix3<S> basis = solver.eigenvectors().rowwise().reverse();
  basis.col(2) *= detail::column_sign(Vector3<S>(basis.col(2)));
  basis.col(0) *= detail::column_sign(Vector3<S>(basis.col(0)));
  basis.col(1) = basis.col(2).cross(basis.col(0));  // forces det = +1
  d.rotation_basis = basis;
  return d;
}

}  // namespace mvreg
