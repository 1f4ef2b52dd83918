#include "mvreg/simulator.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>

#include "mvreg/errors.hpp"
#include "mvreg/stats.hpp"

namespace mvreg {

namespace {

// mt19937_64 produces a standardized stream, but the std distributions do
// not; the samplers below are spelled out so identical seeds give identical
// scenes on every platform.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = std::max(uniform01(), 0x1.0p-53);
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * EIGEN_PI * u2);
    have_spare_ = true;
    return radius * std::cos(2.0 * EIGEN_PI * u2);
  }

  Vector3<double> gaussian_vec() { return {gaussian(), gaussian(), gaussian()}; }

  Vector3<double> unit_vec() {
    Vector3<double> v = gaussian_vec();
    while (v.norm() < 1e-9) v = gaussian_vec();
    return v.normalized();
  }

  // Shoemake's subgroup algorithm: uniform over SO(3).
  Matrix3<double> rotation() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double u3 = uniform01();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const Eigen::Quaterniond q(b * std::cos(2.0 * EIGEN_PI * u3), a * std::sin(2.0 * EIGEN_PI * u2),
                               a * std::cos(2.0 * EIGEN_PI * u2), b * std::sin(2.0 * EIGEN_PI * u3));
    return q.toRotationMatrix();
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

Matrix3<double> tangent_basis(const Vector3<double>& n) {
  const Vector3<double> h =
      std::abs(n.z()) < 0.9 ? Vector3<double>::UnitZ() : Vector3<double>::UnitX();
  Matrix3<double> w;
  w.col(0) = h.cross(n).normalized();
  w.col(1) = n.cross(w.col(0));
  w.col(2) = n;
  return w;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg) {
  if (cfg.num_poses < 1 || cfg.num_planes < 1 || cfg.points_per_plane_per_frame < 1) {
    throw InvalidProblem("generate_scene: counts must be at least 1");
  }
  if (cfg.noise_sigma < 0.0) throw InvalidProblem("generate_scene: negative noise sigma");

  SceneRng rng(cfg.seed);
  Scene scene;

  for (std::size_t k = 0; k < cfg.num_poses; ++k) {
    Posed pose;
    pose.rotation = rng.rotation();
    pose.translation = {rng.uniform(-cfg.pose_box, cfg.pose_box),
                        rng.uniform(-cfg.pose_box, cfg.pose_box),
                        rng.uniform(-cfg.pose_box, cfg.pose_box)};
    scene.gt_poses.push_back(pose);
  }

  for (std::size_t f = 0; f < cfg.num_planes; ++f) {
    PlaneParamd plane;
    plane.normal = rng.unit_vec();
    const double box = 2.0 * cfg.pose_box;
    plane.anchor = {rng.uniform(-box, box), rng.uniform(-box, box), rng.uniform(-box, box)};
    scene.planes.push_back(plane);
  }

  scene.clouds.resize(cfg.num_poses);
  scene.associations.resize(cfg.num_poses);
  for (std::size_t k = 0; k < cfg.num_poses; ++k) {
    const Posed inv = scene.gt_poses[k].inverse();
    for (std::size_t f = 0; f < cfg.num_planes; ++f) {
      const Matrix3<double> w = tangent_basis(scene.planes[f].normal);
      const std::size_t begin = scene.clouds[k].size();
      for (std::size_t i = 0; i < cfg.points_per_plane_per_frame; ++i) {
        const double a = rng.uniform(-cfg.plane_extent, cfg.plane_extent);
        const double b = rng.uniform(-cfg.plane_extent, cfg.plane_extent);
        double depth = 0.0;
        if (cfg.noise_sigma > 0.0) {
          depth = std::clamp(cfg.noise_sigma * rng.gaussian(), -6.0 * cfg.noise_sigma,
                             6.0 * cfg.noise_sigma);
        }
        const Vector3<double> world =
            scene.planes[f].anchor + a * w.col(0) + b * w.col(1) + depth * w.col(2);
        scene.clouds[k].push_back(inv * world);
      }
      scene.associations[k].push_back(PointRange{begin, scene.clouds[k].size(), f});
    }
  }
  return scene;
}

std::vector<Posed> perturb_poses(const std::vector<Posed>& poses, double rot_sigma,
                                 double trans_sigma, std::uint64_t seed) {
  if (rot_sigma < 0.0 || trans_sigma < 0.0) throw InvalidProblem("perturb_poses: negative sigma");
  SceneRng rng(seed);
  std::vector<Posed> out = poses;
  for (std::size_t k = 1; k < out.size(); ++k) {
    Vector6<double> xi;
    xi.head<3>() = rot_sigma * rng.gaussian_vec();
    xi.tail<3>() = trans_sigma * rng.gaussian_vec();
    out[k] = out[k] * exp_se3(xi);
  }
  return out;
}

std::vector<std::vector<FeatureObservationd>> scene_features(const Scene& scene) {
  std::vector<std::vector<FeatureObservationd>> features(scene.planes.size());
  for (std::size_t k = 0; k < scene.clouds.size(); ++k) {
    for (const PointRange& range : scene.associations[k]) {
      const PointCloud patch(scene.clouds[k].begin() + range.begin,
                             scene.clouds[k].begin() + range.end);
      features[range.plane].push_back(make_observation(k, compute_stats(patch)));
    }
  }
  return features;
}

}  // namespace mvreg
