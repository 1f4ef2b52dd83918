#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mvreg/errors.hpp"
#include "mvreg/geometry.hpp"
#include "mvreg/stats.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// Plane through `anchor` with unit `normal`. The anchor is the sample mean
/// of the points the plane was fitted to, not an arbitrary support point.
template <typename Scalar>
struct PlaneParam {
  Vector3<Scalar> normal = Vector3<Scalar>::UnitZ();
  Vector3<Scalar> anchor = Vector3<Scalar>::Zero();
};

using PlaneParamd = PlaneParam<double>;

template <typename Scalar>
Scalar signed_plane_distance(const PlaneParam<Scalar>& plane, const Vector3<Scalar>& x) {
  return plane.normal.dot(x - plane.anchor);
}

/// Minimum-variance plane through aggregated moments: normal is the
/// smallest-eigenvalue direction of the covariance, anchor the mean.
/// Throws DegenerateCluster for fewer than 3 points or a rank-deficient
/// in-plane spread (lambda2 <= 1e-12).
template <typename Scalar>
PlaneParam<Scalar> estimate_plane(const AggregateStats<Scalar>& agg) {
  if (agg.count < 3) throw DegenerateCluster("estimate_plane: fewer than 3 points");
  const EigenDecomp<Scalar> d = sorted_eigendecomposition(agg.cov);
  if (d.eigenvalues(1) <= Scalar(1e-12)) {
    throw DegenerateCluster("estimate_plane: in-plane spread is rank-deficient");
  }
  PlaneParam<Scalar> plane;
  plane.normal = d.rotation_basis.col(2);
  plane.anchor = agg.mean;
  return plane;
}

/// Diagnostics for the first-order optimality conditions of the aggregate
/// smallest-eigenvalue objective: per frame, the thin axis of the frame's
/// distribution must be collinear with the plane normal; per frame pair, the
/// world means must not be separated along the normal.
template <typename Scalar>
struct ConditionReport {
  std::vector<Scalar> frame_angles;  // radians, sign-agnostic, one per frame
  std::vector<Scalar> pair_offsets;  // meters, one per unordered frame pair
  Scalar max_angle = Scalar(0);
  Scalar max_offset = Scalar(0);
  bool satisfied = false;
};

using ConditionReportd = ConditionReport<double>;

template <typename Scalar>
ConditionReport<Scalar> check_optimal_conditions(const std::vector<Pose<Scalar>>& poses,
                                                 const std::vector<LocalStats<Scalar>>& locals,
                                                 const PlaneParam<Scalar>& plane, Scalar tol_angle,
                                                 Scalar tol_dist) {
  if (poses.size() != locals.size()) {
    throw LengthMismatch("check_optimal_conditions: poses and locals differ in length");
  }
  ConditionReport<Scalar> report;
  std::vector<Vector3<Scalar>> world_means;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const EigenDecomp<Scalar> d = sorted_eigendecomposition(locals[k].cov);
    const Vector3<Scalar> thin_axis = poses[k].rotation * d.rotation_basis.col(2);
    // atan2 of (cross, |dot|) stays accurate where acos loses digits.
    const Scalar angle =
        std::atan2(thin_axis.cross(plane.normal).norm(), std::abs(thin_axis.dot(plane.normal)));
    report.frame_angles.push_back(angle);
    report.max_angle = std::max(report.max_angle, angle);
    world_means.push_back(poses[k] * locals[k].mean);
  }
  for (std::size_t k = 0; k < world_means.size(); ++k) {
    for (std::size_t j = k + 1; j < world_means.size(); ++j) {
      const Scalar offset = std::abs(plane.normal.dot(world_means[k] - world_means[j]));
      report.pair_offsets.push_back(offset);
      report.max_offset = std::max(report.max_offset, offset);
    }
  }
  report.satisfied = report.max_angle <= tol_angle && report.max_offset <= tol_dist;
  return report;
}

}  // namespace mvreg
