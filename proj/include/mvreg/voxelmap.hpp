#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mvreg/geometry.hpp"
#include "mvreg/plane.hpp"
#include "mvreg/stats.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// Integer cell coordinates, floor(p / r) per axis.
struct VoxelKey {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  std::int64_t iz = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // FNV-style mix of the three coordinates.
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {std::uint64_t(k.ix), std::uint64_t(k.iy), std::uint64_t(k.iz)}) {
      h = (h ^ v) * 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

VoxelKey voxel_key(const Vector3<double>& point, double resolution);

/// One voxel's per-frame local statistics. `per_frame` is ordered by frame id
/// so reductions and problem assembly are deterministic.
struct VoxelCell {
  std::map<std::size_t, LocalStatsd> per_frame;
  bool active = false;
  std::optional<PlaneParamd> plane;

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [frame, stats] : per_frame) n += stats.count;
    return n;
  }
};

struct VoxelMap {
  double resolution = 1.0;
  std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash> cells;

  /// Keys in lexicographic order, for deterministic iteration.
  std::vector<VoxelKey> sorted_keys() const;
};

/// Bin every point of every cloud by its world position under the given
/// poses. Per-cell statistics are kept in each frame's local coordinates, so
/// a later pose update re-transforms three moments instead of raw points.
VoxelMap build_map(const std::vector<PointCloud>& clouds, const std::vector<Posed>& poses,
                   double resolution);

/// Keep only per-frame entries that look planar and sufficiently sampled
/// (count >= min_points and lambda3 <= planarity_ratio * lambda2); a cell
/// stays active when at least min_frames such entries remain.
VoxelMap filter_active(const VoxelMap& map, std::size_t min_points, double planarity_ratio,
                       std::size_t min_frames);

}  // namespace mvreg
