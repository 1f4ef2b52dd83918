// Batch frontend: registration, scene simulation, trajectory evaluation,
// and accuracy/runtime sweeps. All outputs are files; exit codes are the
// scripting contract (0 success, 1 error, 2 no usable planar structure).

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvreg/detail/format.hpp"
#include "mvreg/errors.hpp"
#include "mvreg/io.hpp"
#include "mvreg/metrics.hpp"
#include "mvreg/pipeline.hpp"
#include "mvreg/simulator.hpp"
#include "mvreg/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvreg;

namespace {

constexpr int kSchemaVersion = 1;

std::vector<fs::path> expand_cloud_args(const std::vector<std::string>& args) {
  std::vector<fs::path> files;
  for (const auto& arg : args) {
    const fs::path path(arg);
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ply") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
  }
  return files;
}

json report_json(const SolveReport& report) {
  return json{{"schema_version", kSchemaVersion},
              {"converged", report.converged},
              {"iterations", report.iterations},
              {"initial_cost", report.initial_cost},
              {"final_cost", report.final_cost},
              {"wall_time", report.wall_time},
              {"cost_trace", report.cost_trace}};
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out << content;
  if (!out) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

int cmd_register(const std::string& config_path, const std::vector<std::string>& cloud_args,
                 const std::string& init_path, const std::string& out_path,
                 const std::string& report_path) {
  const PipelineConfig cfg = load_pipeline_config(config_path);
  const std::vector<fs::path> files = expand_cloud_args(cloud_args);
  std::vector<PointCloud> clouds;
  clouds.reserve(files.size());
  for (const auto& file : files) {
    clouds.push_back(read_ply(file));
  }
  const std::vector<Posed> initial = read_trajectory(init_path);

  const SolveResult result = register_clouds(clouds, initial, cfg);
  write_trajectory(out_path, result.poses);
  if (!report_path.empty()) {
    write_text(report_path, report_json(result.report).dump(2) + "\n");
  }
  if (!result.report.converged) {
    std::cerr << "register: stopped after " << result.report.iterations
              << " iterations without meeting the convergence tolerances\n";
    return 1;
  }
  return 0;
}

int cmd_simulate(std::size_t poses, std::size_t planes, std::size_t points, double sigma,
                 std::uint64_t seed, double pose_box, double extent, double init_rot_sigma,
                 double init_trans_sigma, const std::string& out_dir) {
  if (poses < 2) {
    throw InvalidProblem("simulate: need at least 2 poses to register anything");
  }
  SceneConfig cfg;
  cfg.num_poses = poses;
  cfg.num_planes = planes;
  cfg.points_per_plane_per_frame = points;
  cfg.noise_sigma = sigma;
  cfg.pose_box = pose_box;
  cfg.plane_extent = extent;
  cfg.seed = seed;
  const Scene scene = generate_scene(cfg);
  const std::vector<Posed> initial =
      perturb_poses(scene.gt_poses, init_rot_sigma, init_trans_sigma, seed + 1);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  json manifest{{"schema_version", kSchemaVersion},
                {"poses", poses},
                {"planes", planes},
                {"points_per_plane_per_frame", points},
                {"sigma", sigma},
                {"seed", seed},
                {"pose_box", pose_box},
                {"plane_extent", extent},
                {"init_rot_sigma", init_rot_sigma},
                {"init_trans_sigma", init_trans_sigma},
                {"groundtruth", "groundtruth.traj"},
                {"initial", "initial.traj"}};
  json cloud_names = json::array();
  for (std::size_t k = 0; k < scene.clouds.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "cloud_%03zu.ply", k);
    write_ply(dir / name, scene.clouds[k]);
    cloud_names.push_back(name);
  }
  manifest["clouds"] = cloud_names;
  json plane_list = json::array();
  for (const auto& plane : scene.planes) {
    plane_list.push_back(json{{"normal", {plane.normal.x(), plane.normal.y(), plane.normal.z()}},
                              {"anchor", {plane.anchor.x(), plane.anchor.y(), plane.anchor.z()}}});
  }
  manifest["plane_params"] = plane_list;

  write_trajectory(dir / "groundtruth.traj", scene.gt_poses);
  write_trajectory(dir / "initial.traj", initial);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int cmd_evaluate(const std::string& est_path, const std::string& ref_path,
                 const std::string& cloud_path, const std::string& model_path,
                 const std::string& out_path) {
  const std::vector<Posed> est = read_trajectory(est_path);
  const std::vector<Posed> ref = read_trajectory(ref_path);
  const RpeResult rpe_result = rpe(est, ref);
  const ApeResult ape_result = ape(est, ref);

  std::string csv = "metric,index,value\n";
  const auto emit = [&csv](const std::string& metric, const std::string& index, double value) {
    csv += metric + ',' + index + ',' + detail::format_double(value) + '\n';
  };
  for (std::size_t i = 0; i < rpe_result.trans_errors.size(); ++i) {
    emit("rpe_trans", std::to_string(i), rpe_result.trans_errors[i]);
    emit("rpe_rot", std::to_string(i), rpe_result.rot_errors[i]);
  }
  emit("rpe_trans", "mean", rpe_result.mean_trans);
  emit("rpe_trans", "rms", rpe_result.rms_trans);
  emit("rpe_rot", "mean", rpe_result.mean_rot);
  emit("rpe_rot", "rms", rpe_result.rms_rot);
  for (std::size_t i = 0; i < ape_result.errors.size(); ++i) {
    emit("ape", std::to_string(i), ape_result.errors[i]);
  }
  emit("ape", "mean", ape_result.mean);
  emit("ape", "rms", ape_result.rms);

  std::string summary = "RPE mean " + detail::format_double(rpe_result.mean_trans) + " m / " +
                        detail::format_double(rpe_result.mean_rot) + " rad; APE mean " +
                        detail::format_double(ape_result.mean) + " m";
  if (!cloud_path.empty()) {
    const StructuralResult structural = structural_error(read_ply(cloud_path), read_ply(model_path));
    for (std::size_t i = 0; i < structural.distances.size(); ++i) {
      emit("structural", std::to_string(i), structural.distances[i]);
    }
    emit("structural", "mean", structural.mean);
    emit("structural", "median", structural.median);
    emit("structural", "p95", structural.p95);
    summary += "; structural mean " + detail::format_double(structural.mean) + " m";
  }

  write_text(out_path, csv);
  std::cout << summary << "\n";
  return 0;
}

struct GridPoint {
  std::size_t poses;
  std::size_t planes;
  std::size_t points;
  double sigma;
  std::uint64_t seed;
  ObjectiveKind objective;
};

struct GridRow {
  GridPoint point;
  double trans_error = 0.0;
  double rot_error = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
};

GridRow run_grid_point(const GridPoint& gp) {
  SceneConfig cfg;
  cfg.num_poses = gp.poses;
  cfg.num_planes = gp.planes;
  cfg.points_per_plane_per_frame = gp.points;
  cfg.noise_sigma = gp.sigma;
  cfg.seed = gp.seed;
  const Scene scene = generate_scene(cfg);

  Problem problem;
  problem.poses = perturb_poses(scene.gt_poses, 0.0873, 0.1, gp.seed + 1);
  problem.features = scene_features(scene);
  problem.objective = gp.objective;
  SolverConfig solver_cfg;
  solver_cfg.max_iters = 400;
  const SolveResult result = solve(problem, solver_cfg);

  GridRow row;
  row.point = gp;
  const RpeResult err = rpe(result.poses, scene.gt_poses);
  row.trans_error = err.mean_trans;
  row.rot_error = err.mean_rot;
  row.iterations = result.report.iterations;
  row.converged = result.report.converged;
  row.wall_time = result.report.wall_time;
  return row;
}

template <typename T>
std::vector<T> axis_values(const json& grid, const std::string& key, std::vector<T> fallback) {
  if (!grid.contains(key)) {
    return fallback;
  }
  const json& axis = grid.at(key);
  if (!axis.is_array() || axis.empty()) {
    throw ParseError("grid: '" + key + "' must be a non-empty array");
  }
  std::vector<T> values;
  for (const auto& v : axis) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ParseError("grid: '" + key + "' entries must be numbers");
      values.push_back(v.get<double>());
    } else {
      if (!v.is_number_integer() || v.get<long long>() < 1) {
        throw ParseError("grid: '" + key + "' entries must be positive integers");
      }
      values.push_back(static_cast<T>(v.get<long long>()));
    }
  }
  return values;
}

int cmd_benchmark(const std::string& grid_path, const std::string& out_path, std::size_t seeds,
                  std::size_t jobs) {
  std::ifstream in(grid_path);
  if (!in) {
    throw IoError("cannot open grid '" + grid_path + "'");
  }
  json grid;
  try {
    grid = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("grid: ") + e.what());
  }
  if (!grid.is_object()) {
    throw ParseError("grid: top level must be a JSON object");
  }
  for (const auto& [key, value] : grid.items()) {
    (void)value;
    if (key != "poses" && key != "planes" && key != "sigma" && key != "points") {
      throw ParseError("grid: unknown axis '" + key + "'");
    }
  }
  const auto pose_axis = axis_values<std::size_t>(grid, "poses", {10});
  const auto plane_axis = axis_values<std::size_t>(grid, "planes", {30});
  const auto point_axis = axis_values<std::size_t>(grid, "points", {50});
  const auto sigma_axis = axis_values<double>(grid, "sigma", {0.01});
  for (double sigma : sigma_axis) {
    if (sigma < 0.0) throw ParseError("grid: 'sigma' entries must be non-negative");
  }

  std::vector<GridPoint> tasks;
  for (std::size_t poses : pose_axis) {
    for (std::size_t planes : plane_axis) {
      for (std::size_t points : point_axis) {
        for (double sigma : sigma_axis) {
          for (std::size_t seed = 0; seed < seeds; ++seed) {
            for (ObjectiveKind objective : {ObjectiveKind::Proposed, ObjectiveKind::EfLm}) {
              tasks.push_back(GridPoint{poses, planes, points, sigma, seed, objective});
            }
          }
        }
      }
    }
  }

  if (const char* env = std::getenv("MVREG_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) {
      jobs = static_cast<std::size_t>(parsed);
    }
  }
  jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));

  std::vector<GridRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size() || failed.load()) {
        return;
      }
      try {
        rows[i] = run_grid_point(tasks[i]);
      } catch (const std::exception& e) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) {
          first_error = e.what();
        }
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j + 1 < jobs; ++j) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  if (failed.load()) {
    throw Error("benchmark: " + first_error);
  }

  std::string csv =
      "poses,planes,points,sigma,seed,objective,trans_error,rot_error,iterations,converged,"
      "wall_time\n";
  for (const GridRow& row : rows) {
    csv += std::to_string(row.point.poses) + ',' + std::to_string(row.point.planes) + ',' +
           std::to_string(row.point.points) + ',' + detail::format_double(row.point.sigma) + ',' +
           std::to_string(row.point.seed) + ',' +
           (row.point.objective == ObjectiveKind::Proposed ? "proposed" : "ef_lm") + ',' +
           detail::format_double(row.trans_error) + ',' + detail::format_double(row.rot_error) +
           ',' + std::to_string(row.iterations) + ',' + (row.converged ? "1" : "0") + ',' +
           detail::format_double(row.wall_time) + '\n';
  }
  write_text(out_path, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview point-cloud registration over planar voxel features"};
  app.require_subcommand(1);

  std::string config_path, init_path, out_path, report_path;
  std::vector<std::string> cloud_args;
  CLI::App* reg = app.add_subcommand("register", "Register a sequence of PLY clouds");
  reg->add_option("--config", config_path, "Pipeline config JSON")->required();
  reg->add_option("--clouds", cloud_args,
                  "PLY files, or a directory containing them (sorted by name)")
      ->required()
      ->expected(-1);
  reg->add_option("--init", init_path, "Initial trajectory file")->required();
  reg->add_option("--out", out_path, "Optimized trajectory output")->required();
  reg->add_option("--report", report_path, "Optional solver report JSON");

  std::size_t sim_poses = 10, sim_planes = 30, sim_points = 50;
  double sim_sigma = 0.0, sim_pose_box = 2.0, sim_extent = 1.0;
  double sim_init_rot = 0.0873, sim_init_trans = 0.1;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic multiview scene");
  sim->add_option("--poses", sim_poses, "Number of frames (>= 2)");
  sim->add_option("--planes", sim_planes, "Number of planar patches");
  sim->add_option("--points", sim_points, "Points per plane per frame");
  sim->add_option("--sigma", sim_sigma, "Gaussian noise along plane normals, meters");
  sim->add_option("--seed", sim_seed, "Scene seed");
  sim->add_option("--pose-box", sim_pose_box, "Half-extent of frame positions, meters");
  sim->add_option("--extent", sim_extent, "Patch half-size, meters");
  sim->add_option("--init-rot-sigma", sim_init_rot,
                  "Rotation sigma of the perturbed initial guess, radians");
  sim->add_option("--init-trans-sigma", sim_init_trans,
                  "Translation sigma of the perturbed initial guess, meters");
  sim->add_option("--out", sim_out, "Output directory")->required();

  std::string est_path, ref_path, eval_cloud, eval_model, eval_out;
  CLI::App* eval = app.add_subcommand("evaluate", "Compare trajectories (and optionally clouds)");
  eval->add_option("--est", est_path, "Estimated trajectory")->required();
  eval->add_option("--ref", ref_path, "Reference trajectory")->required();
  CLI::Option* cloud_opt = eval->add_option("--cloud", eval_cloud, "Reconstructed cloud PLY");
  CLI::Option* model_opt = eval->add_option("--model", eval_model, "Ground-truth model PLY");
  cloud_opt->needs(model_opt);
  model_opt->needs(cloud_opt);
  eval->add_option("--out", eval_out, "Metrics CSV output")->required();

  std::string grid_path, bench_out;
  std::size_t bench_seeds = 1, bench_jobs = 1;
  CLI::App* bench = app.add_subcommand("benchmark", "Accuracy/runtime sweep over a scene grid");
  bench->add_option("--grid", grid_path, "Grid JSON with axes poses/planes/points/sigma")
      ->required();
  bench->add_option("--out", bench_out, "Result CSV output")->required();
  bench->add_option("--seeds", bench_seeds, "Seeds per grid point");
  bench->add_option("--jobs", bench_jobs, "Parallel workers (MVREG_THREADS overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (reg->parsed()) {
      return cmd_register(config_path, cloud_args, init_path, out_path, report_path);
    }
    if (sim->parsed()) {
      return cmd_simulate(sim_poses, sim_planes, sim_points, sim_sigma, sim_seed, sim_pose_box,
                          sim_extent, sim_init_rot, sim_init_trans, sim_out);
    }
    if (eval->parsed()) {
      return cmd_evaluate(est_path, ref_path, eval_cloud, eval_model, eval_out);
    }
    if (bench->parsed()) {
      return cmd_benchmark(grid_path, bench_out, bench_seeds, bench_jobs);
    }
  } catch (const NoActiveVoxels& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
