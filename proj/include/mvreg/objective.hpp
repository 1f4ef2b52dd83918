#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "mvreg/errors.hpp"
#include "mvreg/geometry.hpp"
#include "mvreg/plane.hpp"
#include "mvreg/stats.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// One frame's view of one planar feature. Everything derived from the local
/// distribution (basis, weights, scatter factor) is computed once up front
/// and frozen for the whole solve; only the pose and the plane move.
template <typename Scalar>
struct FeatureObservation {
  std::size_t frame_id = 0;
  LocalStats<Scalar> stats;
  EigenDecomp<Scalar> basis;    // of stats.cov
  Vector3<Scalar> weights;      // (sqrt(n l1), sqrt(n l2), sqrt(n))
  Matrix4<Scalar> scatter_factor;  // F with F F^T = homogeneous scatter
};

using FeatureObservationd = FeatureObservation<double>;

/// Residual and Jacobian w.r.t. the owning frame's right-perturbation twist.
template <typename Scalar, int N>
struct ResidualBlockN {
  std::size_t frame_id = 0;
  Eigen::Matrix<Scalar, N, 1> residual = Eigen::Matrix<Scalar, N, 1>::Zero();
  Eigen::Matrix<Scalar, N, 6> jacobian = Eigen::Matrix<Scalar, N, 6>::Zero();
};

template <typename Scalar>
using ResidualBlock = ResidualBlockN<Scalar, 3>;
template <typename Scalar>
using EfResidualBlock = ResidualBlockN<Scalar, 4>;

using ResidualBlockd = ResidualBlock<double>;
using EfResidualBlockd = EfResidualBlock<double>;

/// Unnormalized second-moment matrix of homogeneous points,
/// S = sum_i [p_i; 1][p_i; 1]^T.
template <typename Scalar>
Matrix4<Scalar> build_homogeneous_scatter(const std::vector<Vector3<Scalar>>& points) {
  if (points.empty()) throw EmptyInput("build_homogeneous_scatter: no points");
  Matrix4<Scalar> s = Matrix4<Scalar>::Zero();
  for (const auto& p : points) {
    Vector4<Scalar> h;
    h << p, Scalar(1);
    s += h * h.transpose();
  }
  return s;
}

/// Same scatter recovered from moments: S = n [Sigma + mu mu^T, mu; mu^T, 1].
template <typename Scalar>
Matrix4<Scalar> scatter_from_stats(const LocalStats<Scalar>& stats) {
  Matrix4<Scalar> s;
  const Scalar n = Scalar(stats.count);
  s.template block<3, 3>(0, 0) = stats.cov + stats.mean * stats.mean.transpose();
  s.template block<3, 1>(0, 3) = stats.mean;
  s.template block<1, 3>(3, 0) = stats.mean.transpose();
  s(3, 3) = Scalar(1);
  return n * s;
}

/// Factor F with F F^T = S for a possibly rank-deficient PSD scatter, via
/// symmetric eigendecomposition. Pivoted LDL^T is unreliable for
/// semidefinite input (exactly planar clusters with a distant mean make it
/// report spurious negative pivots). Eigenvalues within 1e-10 * max|lambda|
/// of zero count as zero; anything below that band means S is not PSD
/// (CholeskyFailure).
template <typename Scalar>
Matrix4<Scalar> scatter_factor(const Matrix4<Scalar>& s) {
  Eigen::SelfAdjointEigenSolver<Matrix4<Scalar>> es(s);
  const Vector4<Scalar>& ev = es.eigenvalues();  // ascending
  const Scalar tol = Scalar(1e-10) * std::max(std::abs(ev(0)), std::abs(ev(3)));
  Vector4<Scalar> d;
  for (int i = 0; i < 4; ++i) {
    if (ev(i) < -tol) throw CholeskyFailure("scatter_factor: matrix is not positive semi-definite");
    d(i) = ev(i) > tol ? std::sqrt(ev(i)) : Scalar(0);
  }
  return es.eigenvectors() * d.asDiagonal();
}

/// Precompute the frozen per-observation quantities from local moments.
template <typename Scalar>
FeatureObservation<Scalar> make_observation(std::size_t frame_id, const LocalStats<Scalar>& stats) {
  FeatureObservation<Scalar> obs;
  obs.frame_id = frame_id;
  obs.stats = stats;
  obs.basis = sorted_eigendecomposition(stats.cov);
  const Scalar n = Scalar(stats.count);
  obs.weights(0) = std::sqrt(n * std::max(obs.basis.eigenvalues(0), Scalar(0)));
  obs.weights(1) = std::sqrt(n * std::max(obs.basis.eigenvalues(1), Scalar(0)));
  obs.weights(2) = std::sqrt(n);
  obs.scatter_factor = scatter_factor(scatter_from_stats(stats));
  return obs;
}

/// Eigenvalue-weighted planar residual of one observation:
///   r = [ w1 n^T R u_x,  w2 n^T R u_y,  w3 n^T (R mu + t - anchor) ]
/// with u_x, u_y the two in-plane axes of the frozen local basis. The plane
/// is treated as a constant: it never enters the Jacobian.
template <typename Scalar>
ResidualBlock<Scalar> proposed_residual(const FeatureObservation<Scalar>& obs, const Pose<Scalar>& pose,
                                        const PlaneParam<Scalar>& plane) {
  ResidualBlock<Scalar> block;
  block.frame_id = obs.frame_id;

  const Vector3<Scalar>& n = plane.normal;
  const Matrix3<Scalar>& r = pose.rotation;
  const Vector3<Scalar> u_x = obs.basis.rotation_basis.col(0);
  const Vector3<Scalar> u_y = obs.basis.rotation_basis.col(1);
  const Vector3<Scalar> nr = r.transpose() * n;  // n expressed in the frame

  block.residual(0) = obs.weights(0) * nr.dot(u_x);
  block.residual(1) = obs.weights(1) * nr.dot(u_y);
  block.residual(2) = obs.weights(2) * n.dot(r * obs.stats.mean + pose.translation - plane.anchor);

  // d(n^T R u)/d_omega = -n^T R hat(u) under R <- R exp(hat(omega)).
  block.jacobian.template block<1, 3>(0, 0) = -obs.weights(0) * (nr.cross(u_x)).transpose();
  block.jacobian.template block<1, 3>(1, 0) = -obs.weights(1) * (nr.cross(u_y)).transpose();
  block.jacobian.template block<1, 3>(2, 0) = -obs.weights(2) * (nr.cross(obs.stats.mean)).transpose();
  block.jacobian.template block<1, 3>(2, 3) = obs.weights(2) * nr.transpose();
  return block;
}

/// Homogeneous plane coefficients eta = [n; -n^T anchor].
template <typename Scalar>
Vector4<Scalar> homogeneous_plane(const PlaneParam<Scalar>& plane) {
  Vector4<Scalar> eta;
  eta << plane.normal, -plane.normal.dot(plane.anchor);
  return eta;
}

/// Factored point-to-plane residual r = F^T T^T eta, whose squared norm is
/// eta^T T S T^T eta, the summed squared plane distance of the frame's points.
template <typename Scalar>
EfResidualBlock<Scalar> ef_lm_residual(const Matrix4<Scalar>& scatter_factor, const Pose<Scalar>& pose,
                                       const Vector4<Scalar>& plane_h) {
  const Vector3<Scalar> n = plane_h.template head<3>();
  const Vector3<Scalar> a = pose.rotation.transpose() * n;
  const Scalar b = n.dot(pose.translation) + plane_h(3);

  Vector4<Scalar> q;  // T^T eta
  q << a, b;

  EfResidualBlock<Scalar> block;
  block.residual = scatter_factor.transpose() * q;

  // Right perturbation: dq = [hat(a) domega; a^T drho].
  Eigen::Matrix<Scalar, 4, 6> dq = Eigen::Matrix<Scalar, 4, 6>::Zero();
  dq.template block<3, 3>(0, 0) = hat(a);
  dq.template block<1, 3>(3, 3) = a.transpose();
  block.jacobian = scatter_factor.transpose() * dq;
  return block;
}

/// Smallest eigenvalue of the aggregate covariance, clamped at zero.
template <typename Scalar>
Scalar evm_cost(const AggregateStats<Scalar>& agg) {
  return std::max(sorted_eigendecomposition(agg.cov).eigenvalues(2), Scalar(0));
}

/// Mean squared plane distance over all raw points of all frames,
///   (1/n) sum_k sum_i (n^T (R_k p_ki + t_k - anchor))^2.
/// With the plane fitted to the aggregate this equals evm_cost.
template <typename Scalar>
Scalar mean_squared_plane_distance(const std::vector<std::pair<Pose<Scalar>, std::vector<Vector3<Scalar>>>>& frames,
                  const PlaneParam<Scalar>& plane) {
  Scalar sum = Scalar(0);
  std::size_t count = 0;
  for (const auto& [pose, points] : frames) {
    for (const auto& p : points) {
      const Scalar d = signed_plane_distance(plane, pose * p);
      sum += d * d;
    }
    count += points.size();
  }
  if (count == 0) throw EmptyInput("mean_squared_plane_distance: no points");
  return sum / Scalar(count);
}

}  // namespace mvreg
