#include "mvreg/pipeline.hpp"

#include <cstddef>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mvreg/errors.hpp"
#include "mvreg/objective.hpp"
#include "mvreg/voxelmap.hpp"

namespace mvreg {

namespace {

using nlohmann::json;

double as_number(const json& value, const std::string& key) {
  if (!value.is_number()) {
    throw ParseError("config: '" + key + "' must be a number");
  }
  return value.get<double>();
}

std::size_t as_count(const json& value, const std::string& key) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw ParseError("config: '" + key + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(value.get<long long>());
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("config: top level must be a JSON object");
  }
  PipelineConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "voxel_resolution") {
      cfg.voxel_resolution = as_number(value, key);
    } else if (key == "min_points") {
      cfg.min_points = as_count(value, key);
    } else if (key == "planarity_ratio") {
      cfg.planarity_ratio = as_number(value, key);
    } else if (key == "min_frames") {
      cfg.min_frames = as_count(value, key);
    } else if (key == "max_iters") {
      cfg.max_iters = static_cast<int>(as_count(value, key));
    } else if (key == "rel_tol") {
      cfg.rel_tol = as_number(value, key);
    } else if (key == "step_tol") {
      cfg.step_tol = as_number(value, key);
    } else if (key == "downsample_resolution") {
      if (value.is_null()) {
        cfg.downsample_resolution.reset();
      } else {
        cfg.downsample_resolution = as_number(value, key);
      }
    } else if (key == "fix_frame") {
      cfg.fix_frame = as_count(value, key);
    } else {
      throw ParseError("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pipeline_config(buf.str());
}

PointCloud downsample(const PointCloud& cloud, double resolution) {
  if (resolution <= 0.0) {
    throw InvalidProblem("downsample: resolution must be positive");
  }
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slots;
  std::vector<Vector3<double>> sums;
  std::vector<std::size_t> counts;
  for (const auto& p : cloud) {
    const auto [it, fresh] = slots.try_emplace(voxel_key(p, resolution), sums.size());
    if (fresh) {
      sums.push_back(p);
      counts.push_back(1);
    } else {
      sums[it->second] += p;
      ++counts[it->second];
    }
  }
  PointCloud out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    out[i] = sums[i] / static_cast<double>(counts[i]);
  }
  return out;
}

SolveResult register_clouds(const std::vector<PointCloud>& clouds,
                            const std::vector<Posed>& initial_poses, const PipelineConfig& cfg) {
  if (clouds.size() < 2) {
    throw InvalidProblem("register: need at least two clouds");
  }
  if (clouds.size() != initial_poses.size()) {
    throw LengthMismatch("register: clouds and poses differ in length");
  }
  if (cfg.fix_frame >= clouds.size()) {
    throw InvalidProblem("register: fix_frame out of range");
  }
  if (cfg.max_iters < 1) {
    throw InvalidProblem("register: max_iters must be positive");
  }

  const std::vector<PointCloud>* input = &clouds;
  std::vector<PointCloud> thinned;
  if (cfg.downsample_resolution) {
    thinned.reserve(clouds.size());
    for (const auto& cloud : clouds) {
      thinned.push_back(downsample(cloud, *cfg.downsample_resolution));
    }
    input = &thinned;
  }

  VoxelMap map = build_map(*input, initial_poses, cfg.voxel_resolution);
  map = filter_active(map, cfg.min_points, cfg.planarity_ratio, cfg.min_frames);

  Problem problem;
  problem.poses = initial_poses;
  problem.fixed_frames = {cfg.fix_frame};
  problem.objective = ObjectiveKind::Proposed;
  for (const VoxelKey& key : map.sorted_keys()) {
    const VoxelCell& cell = map.cells.at(key);
    if (!cell.active) {
      continue;
    }
    std::vector<FeatureObservationd> feature;
    feature.reserve(cell.per_frame.size());
    for (const auto& [frame, stats] : cell.per_frame) {
      feature.push_back(make_observation(frame, stats));
    }
    problem.features.push_back(std::move(feature));
  }
  if (problem.features.empty()) {
    throw NoActiveVoxels("register: no voxel passed the activity thresholds");
  }

  SolverConfig solver_cfg;
  solver_cfg.max_iters = cfg.max_iters;
  solver_cfg.rel_tol = cfg.rel_tol;
  solver_cfg.step_tol = cfg.step_tol;
  return solve(problem, solver_cfg);
}

}  // namespace mvreg
