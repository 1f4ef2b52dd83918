#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvreg/solver.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// Flat JSON schema, strict: unknown keys are a ParseError. Every key is
/// optional and falls back to the default below. "downsample_resolution"
/// accepts null for "leave the clouds alone", which is also the default;
/// the objective handles raw densities fine, so thinning is opt-in.
struct PipelineConfig {
  double voxel_resolution = 1.0;
  std::size_t min_points = 10;
  double planarity_ratio = 0.1;
  std::size_t min_frames = 2;
  int max_iters = 100;
  double rel_tol = 1e-8;
  double step_tol = 1e-10;
  std::optional<double> downsample_resolution;
  std::size_t fix_frame = 0;
};

PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Voxel-grid thinning: one centroid per occupied cell, first-seen order.
PointCloud downsample(const PointCloud& cloud, double resolution);

/// End-to-end registration: bin the clouds under the initial poses, keep
/// planar well-observed voxels, and refine all poses jointly. Throws
/// NoActiveVoxels when the thresholds leave nothing to optimize.
SolveResult register_clouds(const std::vector<PointCloud>& clouds,
                            const std::vector<Posed>& initial_poses, const PipelineConfig& cfg);

}  // namespace mvreg
