#pragma once

#include <cstddef>
#include <vector>

#include "mvreg/errors.hpp"
#include "mvreg/geometry.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

// The three stats types carry identical payloads but live in different
// frames; keeping them distinct makes a missing transform a type error.

/// First and second moments of points in a sensor frame. Covariances are
/// population-normalized (1/n) everywhere in the library.
template <typename Scalar>
struct LocalStats {
  std::size_t count = 0;
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Matrix3<Scalar> cov = Matrix3<Scalar>::Zero();
};

/// LocalStats pushed through a frame pose into the world frame.
template <typename Scalar>
struct WorldStats {
  std::size_t count = 0;
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Matrix3<Scalar> cov = Matrix3<Scalar>::Zero();
};

/// Moments of the union of several world-frame point sets.
template <typename Scalar>
struct AggregateStats {
  std::size_t count = 0;
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Matrix3<Scalar> cov = Matrix3<Scalar>::Zero();
};

using LocalStatsd = LocalStats<double>;
using WorldStatsd = WorldStats<double>;
using AggregateStatsd = AggregateStats<double>;

/// Two-pass mean and population covariance. Throws EmptyInput on no points.
template <typename Scalar>
LocalStats<Scalar> compute_stats(const std::vector<Vector3<Scalar>>& points) {
  if (points.empty()) throw EmptyInput("compute_stats: no points");
  LocalStats<Scalar> s;
  s.count = points.size();
  for (const auto& p : points) s.mean += p;
  s.mean /= Scalar(s.count);
  for (const auto& p : points) {
    const Vector3<Scalar> d = p - s.mean;
    s.cov += d * d.transpose();
  }
  s.cov /= Scalar(s.count);
  return s;
}

/// Moments of the transformed point set, without touching the points.
template <typename Scalar>
WorldStats<Scalar> transform_stats(const Pose<Scalar>& pose, const LocalStats<Scalar>& s) {
  WorldStats<Scalar> w;
  w.count = s.count;
  w.mean = pose.rotation * s.mean + pose.translation;
  w.cov = pose.rotation * s.cov * pose.rotation.transpose();
  return w;
}

/// Moments of the union of the underlying point sets, O(parts) regardless of
/// how many points each part summarizes:
///   mu    = sum_k (n_k / n) mu_k
///   Sigma = sum_k (n_k / n) (Sigma_k + (mu_k - mu)(mu_k - mu)^T)
template <typename Scalar>
AggregateStats<Scalar> aggregate(const std::vector<WorldStats<Scalar>>& parts) {
  if (parts.empty()) throw EmptyInput("aggregate: no parts");
  AggregateStats<Scalar> a;
  for (const auto& p : parts) a.count += p.count;
  if (a.count == 0) throw EmptyInput("aggregate: all parts empty");
  const Scalar n = Scalar(a.count);
  for (const auto& p : parts) a.mean += (Scalar(p.count) / n) * p.mean;
  for (const auto& p : parts) {
    const Vector3<Scalar> d = p.mean - a.mean;
    a.cov += (Scalar(p.count) / n) * (p.cov + d * d.transpose());
  }
  return a;
}

/// Slack in the eigenvalue superadditivity bound
///   lambda3(Sigma) >= sum_k (n_k / n) lambda3(Sigma_k),
/// which is non-negative whenever `agg` aggregates `parts`.
template <typename Scalar>
Scalar weyl_gap(const AggregateStats<Scalar>& agg, const std::vector<WorldStats<Scalar>>& parts) {
  Scalar bound = Scalar(0);
  const Scalar n = Scalar(agg.count);
  for (const auto& p : parts) {
    bound += (Scalar(p.count) / n) * sorted_eigendecomposition(p.cov).eigenvalues(2);
  }
  return sorted_eigendecomposition(agg.cov).eigenvalues(2) - bound;
}

}  // namespace mvreg
