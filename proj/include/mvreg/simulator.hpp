#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mvreg/geometry.hpp"
#include "mvreg/objective.hpp"
#include "mvreg/plane.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

struct SceneConfig {
  std::size_t num_poses = 10;
  std::size_t num_planes = 30;
  std::size_t points_per_plane_per_frame = 50;
  double noise_sigma = 0.0;     // meters, along each plane's normal
  double pose_box = 2.0;        // half-extent of pose positions
  double plane_extent = 1.0;    // patch half-size
  std::uint64_t seed = 0;
};

/// Contiguous slice of a frame's cloud belonging to one plane.
struct PointRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t plane = 0;
};

struct Scene {
  std::vector<Posed> gt_poses;
  std::vector<PlaneParamd> planes;
  std::vector<PointCloud> clouds;                     // local coordinates
  std::vector<std::vector<PointRange>> associations;  // per frame
};

/// Monte-Carlo scene: uniformly random poses, planes with uniform normals,
/// square patches sampled per frame per plane, Gaussian normal-direction
/// noise clamped at six sigma. Bit-reproducible for a given seed (mt19937_64
/// with fixed uniform/Box-Muller/quaternion sampling, independent of any
/// platform's distribution implementations).
Scene generate_scene(const SceneConfig& cfg);

/// pose_k <- pose_k * exp(xi), xi components Gaussian (rotation block scaled
/// by rot_sigma, translation block by trans_sigma). Frame 0 stays put.
std::vector<Posed> perturb_poses(const std::vector<Posed>& poses, double rot_sigma,
                                 double trans_sigma, std::uint64_t seed);

/// Per-plane observation lists built from the scene's known associations,
/// ready to drop into a Problem.
std::vector<std::vector<FeatureObservationd>> scene_features(const Scene& scene);

}  // namespace mvreg
