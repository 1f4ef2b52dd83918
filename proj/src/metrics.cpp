#include "mvreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "mvreg/detail/format.hpp"
#include "mvreg/errors.hpp"
#include "mvreg/voxelmap.hpp"

namespace mvreg {

namespace {

void finish_mean_rms(const std::vector<double>& v, double& mean, double& rms) {
  double sum = 0.0;
  double sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  mean = sum / static_cast<double>(v.size());
  rms = std::sqrt(sq / static_cast<double>(v.size()));
}

}  // namespace

RpeResult rpe(const std::vector<Posed>& estimated, const std::vector<Posed>& reference) {
  if (estimated.size() != reference.size()) {
    throw LengthMismatch("rpe: trajectory lengths differ");
  }
  if (estimated.size() < 2) {
    throw InvalidProblem("rpe: need at least two poses");
  }
  RpeResult result;
  const std::size_t pairs = estimated.size() - 1;
  result.trans_errors.reserve(pairs);
  result.rot_errors.reserve(pairs);
  for (std::size_t i = 0; i + 1 < estimated.size(); ++i) {
    const Posed delta_est = estimated[i].inverse() * estimated[i + 1];
    const Posed delta_ref = reference[i].inverse() * reference[i + 1];
    const Posed err = delta_ref.inverse() * delta_est;
    result.trans_errors.push_back(err.translation.norm());
    result.rot_errors.push_back(rotation_angle(err.rotation));
  }
  finish_mean_rms(result.trans_errors, result.mean_trans, result.rms_trans);
  finish_mean_rms(result.rot_errors, result.mean_rot, result.rms_rot);
  return result;
}

ApeResult ape(const std::vector<Posed>& estimated, const std::vector<Posed>& reference,
              AlignMode mode) {
  if (estimated.size() != reference.size()) {
    throw LengthMismatch("ape: trajectory lengths differ");
  }
  if (estimated.empty()) {
    throw EmptyInput("ape: empty trajectories");
  }
  const std::size_t n = estimated.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix3<double> align_rot = Matrix3<double>::Identity();
  Vector3<double> align_trans = Vector3<double>::Zero();
  Vector3<double> mean_est = Vector3<double>::Zero();
  Vector3<double> mean_ref = Vector3<double>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mean_est += estimated[i].translation;
    mean_ref += reference[i].translation;
  }
  mean_est *= inv_n;
  mean_ref *= inv_n;

  if (mode == AlignMode::Translation) {
    align_trans = mean_ref - mean_est;
  } else {
    // Orthogonal Procrustes on the centered frame positions. Degenerate
    // spreads (all frames collinear or coincident) still give some valid
    // minimizer, which is all the mode promises.
    Matrix3<double> h = Matrix3<double>::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      h += (estimated[i].translation - mean_est) * (reference[i].translation - mean_ref).transpose();
    }
    Eigen::JacobiSVD<Matrix3<double>> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3<double> flip = Matrix3<double>::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
      flip(2, 2) = -1.0;
    }
    align_rot = svd.matrixV() * flip * svd.matrixU().transpose();
    align_trans = mean_ref - align_rot * mean_est;
  }

  ApeResult result;
  result.errors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector3<double> mapped = align_rot * estimated[i].translation + align_trans;
    result.errors.push_back((mapped - reference[i].translation).norm());
  }
  finish_mean_rms(result.errors, result.mean, result.rms);
  return result;
}

namespace {

struct GridNn {
  double cell = 1.0;
  const PointCloud* points = nullptr;
  std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash> cells;

  void build(const PointCloud& pts, double cell_size) {
    cell = cell_size;
    points = &pts;
    cells.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cells[voxel_key(pts[i], cell)].push_back(i);
    }
  }

  double nearest(const Vector3<double>& q) const {
    // Seed with an arbitrary member so the ring bound is finite from the start.
    double best = (q - (*points)[0]).norm();
    const VoxelKey center = voxel_key(q, cell);
    // Points in a cell at Chebyshev ring r lie at least (r - 1) * cell away,
    // so once that bound exceeds the best distance no further ring can help.
    for (std::int64_t r = 0;; ++r) {
      if (r > 0 && (static_cast<double>(r) - 1.0) * cell > best) {
        break;
      }
      for (std::int64_t dx = -r; dx <= r; ++dx) {
        for (std::int64_t dy = -r; dy <= r; ++dy) {
          for (std::int64_t dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) {
              continue;
            }
            const auto it = cells.find(VoxelKey{center.ix + dx, center.iy + dy, center.iz + dz});
            if (it == cells.end()) {
              continue;
            }
            for (std::size_t idx : it->second) {
              best = std::min(best, (q - (*points)[idx]).norm());
            }
          }
        }
      }
    }
    return best;
  }
};

double nearest_linear(const Vector3<double>& q, const PointCloud& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    best = std::min(best, (q - p).norm());
  }
  return best;
}

double nearest_rank(const std::vector<double>& sorted, double quantile) {
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(quantile * n));
  rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
  return sorted[rank - 1];
}

}  // namespace

StructuralResult structural_error(const PointCloud& reconstructed, const PointCloud& ground_truth) {
  if (reconstructed.empty() || ground_truth.empty()) {
    throw EmptyInput("structural_error: empty point cloud");
  }
  StructuralResult result;
  result.distances.reserve(reconstructed.size());

  constexpr std::size_t kLinearLimit = 1000;
  if (reconstructed.size() <= kLinearLimit || ground_truth.size() <= kLinearLimit) {
    for (const auto& q : reconstructed) {
      result.distances.push_back(nearest_linear(q, ground_truth));
    }
  } else {
    // Calibrate the cell size from a sample of exact nearest-neighbor
    // distances so occupied cells hold O(1) candidates near the queries.
    std::vector<double> sample;
    const std::size_t stride = std::max<std::size_t>(1, reconstructed.size() / 100);
    for (std::size_t i = 0; i < reconstructed.size(); i += stride) {
      sample.push_back(nearest_linear(reconstructed[i], ground_truth));
    }
    std::sort(sample.begin(), sample.end());
    Vector3<double> lo = ground_truth[0];
    Vector3<double> hi = ground_truth[0];
    for (const auto& p : ground_truth) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    // Keep the grid between "one cell per point" and "128 cells per axis" so
    // distant queries cannot force unbounded ring walks.
    const double cell =
        std::max({nearest_rank(sample, 0.95), (hi - lo).norm() / 128.0, 1e-12});
    GridNn grid;
    grid.build(ground_truth, cell);
    for (const auto& q : reconstructed) {
      result.distances.push_back(grid.nearest(q));
    }
  }

  double sum = 0.0;
  for (double d : result.distances) {
    sum += d;
  }
  result.mean = sum / static_cast<double>(result.distances.size());
  std::vector<double> sorted = result.distances;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  result.median =
      (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  result.p95 = nearest_rank(sorted, 0.95);
  return result;
}

// Published trajectory tables rarely say whether they list means or RMS, so
// the summary footer carries both.
void write_rpe_csv(std::ostream& out, const RpeResult& result) {
  out << "pair,translation_error,rotation_error\n";
  for (std::size_t i = 0; i < result.trans_errors.size(); ++i) {
    out << i << ',' << detail::format_double(result.trans_errors[i]) << ','
        << detail::format_double(result.rot_errors[i]) << '\n';
  }
  out << "mean," << detail::format_double(result.mean_trans) << ','
      << detail::format_double(result.mean_rot) << '\n';
  out << "rms," << detail::format_double(result.rms_trans) << ','
      << detail::format_double(result.rms_rot) << '\n';
}

void write_ape_csv(std::ostream& out, const ApeResult& result) {
  out << "frame,translation_error\n";
  for (std::size_t i = 0; i < result.errors.size(); ++i) {
    out << i << ',' << detail::format_double(result.errors[i]) << '\n';
  }
  out << "mean," << detail::format_double(result.mean) << '\n';
  out << "rms," << detail::format_double(result.rms) << '\n';
}

void write_structural_csv(std::ostream& out, const StructuralResult& result) {
  out << "point,distance\n";
  for (std::size_t i = 0; i < result.distances.size(); ++i) {
    out << i << ',' << detail::format_double(result.distances[i]) << '\n';
  }
  out << "mean," << detail::format_double(result.mean) << '\n';
  out << "median," << detail::format_double(result.median) << '\n';
  out << "p95," << detail::format_double(result.p95) << '\n';
}

}  // namespace mvreg
