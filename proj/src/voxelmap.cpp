#include "mvreg/voxelmap.hpp"

#include <algorithm>
#include <cmath>

#include "mvreg/errors.hpp"

namespace mvreg {

VoxelKey voxel_key(const Vector3<double>& point, double resolution) {
  if (!(resolution > 0.0)) throw InvalidProblem("voxel_key: resolution must be positive");
  return VoxelKey{static_cast<std::int64_t>(std::floor(point.x() / resolution)),
                  static_cast<std::int64_t>(std::floor(point.y() / resolution)),
                  static_cast<std::int64_t>(std::floor(point.z() / resolution))};
}

std::vector<VoxelKey> VoxelMap::sorted_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(cells.size());
  for (const auto& [key, cell] : cells) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

namespace {

// Moments accumulated about the bucket's first point; centering the sums
// keeps the covariance accurate when a cell sits far from the origin.
struct Accumulator {
  std::size_t count = 0;
  Vector3<double> anchor = Vector3<double>::Zero();
  Vector3<double> sum = Vector3<double>::Zero();
  Matrix3<double> sum2 = Matrix3<double>::Zero();

  void add(const Vector3<double>& p) {
    if (count == 0) anchor = p;
    const Vector3<double> d = p - anchor;
    sum += d;
    sum2 += d * d.transpose();
    ++count;
  }

  LocalStatsd finish() const {
    LocalStatsd s;
    s.count = count;
    const double n = static_cast<double>(count);
    const Vector3<double> centered_mean = sum / n;
    s.mean = anchor + centered_mean;
    s.cov = sum2 / n - centered_mean * centered_mean.transpose();
    return s;
  }
};

}  // namespace

VoxelMap build_map(const std::vector<PointCloud>& clouds, const std::vector<Posed>& poses,
                   double resolution) {
  if (clouds.size() != poses.size()) {
    throw LengthMismatch("build_map: clouds and poses differ in length");
  }
  if (!(resolution > 0.0)) throw InvalidProblem("build_map: resolution must be positive");

  std::unordered_map<VoxelKey, std::map<std::size_t, Accumulator>, VoxelKeyHash> buckets;
  for (std::size_t k = 0; k < clouds.size(); ++k) {
    for (const auto& p : clouds[k]) {
      buckets[voxel_key(poses[k] * p, resolution)][k].add(p);
    }
  }

  VoxelMap map;
  map.resolution = resolution;
  for (const auto& [key, per_frame] : buckets) {
    VoxelCell& cell = map.cells[key];
    for (const auto& [frame, acc] : per_frame) cell.per_frame[frame] = acc.finish();
  }
  return map;
}

VoxelMap filter_active(const VoxelMap& map, std::size_t min_points, double planarity_ratio,
                       std::size_t min_frames) {
  VoxelMap out;
  out.resolution = map.resolution;
  for (const auto& [key, cell] : map.cells) {
    VoxelCell kept;
    for (const auto& [frame, stats] : cell.per_frame) {
      if (stats.count < min_points) continue;
      const Vector3<double> ev = sorted_eigendecomposition(stats.cov).eigenvalues;
      if (ev(2) > planarity_ratio * ev(1)) continue;
      kept.per_frame.emplace(frame, stats);
    }
    kept.active = kept.per_frame.size() >= min_frames;
    out.cells.emplace(key, std::move(kept));
  }
  return out;
}

}  // namespace mvreg
