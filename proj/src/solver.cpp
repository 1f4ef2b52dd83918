#include "mvreg/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mvreg/errors.hpp"
#include "mvreg/plane.hpp"
#include "mvreg/stats.hpp"

namespace mvreg {

namespace {

constexpr double kDampingMax = 1e8;

void validate(const Problem& problem) {
  if (problem.poses.empty()) throw InvalidProblem("solve: no poses");
  if (problem.features.empty()) throw InvalidProblem("solve: no features");
  if (problem.fixed_frames.empty()) throw InvalidProblem("solve: gauge is free, fix a frame");
  for (std::size_t f : problem.fixed_frames) {
    if (f >= problem.poses.size()) {
      throw InvalidProblem("solve: fixed frame " + std::to_string(f) + " out of range");
    }
  }
  std::vector<char> observed(problem.poses.size(), 0);
  for (const auto& feature : problem.features) {
    if (feature.empty()) throw InvalidProblem("solve: feature without observations");
    for (const auto& obs : feature) {
      if (obs.frame_id >= problem.poses.size()) {
        throw InvalidProblem("solve: observation references frame " + std::to_string(obs.frame_id));
      }
      observed[obs.frame_id] = 1;
    }
  }
  for (std::size_t k = 0; k < problem.poses.size(); ++k) {
    if (!observed[k] && !problem.fixed_frames.count(k)) {
      throw InvalidProblem("solve: frame " + std::to_string(k) + " is free but unobserved");
    }
  }
}

std::vector<PlaneParamd> fit_planes(const Problem& problem, const std::vector<Posed>& poses) {
  std::vector<PlaneParamd> planes;
  planes.reserve(problem.features.size());
  std::vector<WorldStatsd> parts;
  for (const auto& feature : problem.features) {
    parts.clear();
    for (const auto& obs : feature) parts.push_back(transform_stats(poses[obs.frame_id], obs.stats));
    planes.push_back(estimate_plane(aggregate(parts)));
  }
  return planes;
}

double cost_at(const Problem& problem, const std::vector<Posed>& poses,
               const std::vector<PlaneParamd>& planes) {
  double cost = 0.0;
  for (std::size_t f = 0; f < problem.features.size(); ++f) {
    if (problem.objective == ObjectiveKind::Proposed) {
      for (const auto& obs : problem.features[f]) {
        cost += proposed_residual(obs, poses[obs.frame_id], planes[f]).residual.squaredNorm();
      }
    } else {
      const Vector4<double> eta = homogeneous_plane(planes[f]);
      for (const auto& obs : problem.features[f]) {
        cost += ef_lm_residual(obs.scatter_factor, poses[obs.frame_id], eta).residual.squaredNorm();
      }
    }
  }
  return cost;
}

// The system is block-diagonal: every residual involves exactly one frame,
// and cross-frame coupling enters only through the per-iteration plane fit.
struct NormalEquations {
  std::vector<Matrix6<double>> h;
  std::vector<Vector6<double>> g;
};

NormalEquations assemble(const Problem& problem, const std::vector<Posed>& poses,
                         const std::vector<PlaneParamd>& planes) {
  NormalEquations eq;
  eq.h.assign(poses.size(), Matrix6<double>::Zero());
  eq.g.assign(poses.size(), Vector6<double>::Zero());
  for (std::size_t f = 0; f < problem.features.size(); ++f) {
    if (problem.objective == ObjectiveKind::Proposed) {
      for (const auto& obs : problem.features[f]) {
        const ResidualBlockd block = proposed_residual(obs, poses[obs.frame_id], planes[f]);
        eq.h[obs.frame_id] += block.jacobian.transpose() * block.jacobian;
        eq.g[obs.frame_id] += block.jacobian.transpose() * block.residual;
      }
    } else {
      const Vector4<double> eta = homogeneous_plane(planes[f]);
      for (const auto& obs : problem.features[f]) {
        const EfResidualBlockd block = ef_lm_residual(obs.scatter_factor, poses[obs.frame_id], eta);
        eq.h[obs.frame_id] += block.jacobian.transpose() * block.jacobian;
        eq.g[obs.frame_id] += block.jacobian.transpose() * block.residual;
      }
    }
  }
  return eq;
}

}  // namespace

double evaluate_cost(const Problem& problem, const std::vector<Posed>& poses) {
  return cost_at(problem, poses, fit_planes(problem, poses));
}

SolveResult solve(const Problem& problem, const SolverConfig& cfg) {
  validate(problem);
  if (cfg.max_iters <= 0) throw InvalidProblem("solve: max_iters must be positive");
  const auto t_start = std::chrono::steady_clock::now();

  SolveResult result;
  result.poses = problem.poses;
  SolveReport& report = result.report;

  double mu = cfg.damping_init;
  bool first = true;

  for (int iter = 0; iter < cfg.max_iters && !report.converged; ++iter) {
    report.iterations = iter + 1;

    const std::vector<PlaneParamd> planes = fit_planes(problem, result.poses);
    const double current = cost_at(problem, result.poses, planes);
    if (first) {
      report.initial_cost = current;
      report.cost_trace.push_back(current);
      first = false;
    }

    const NormalEquations eq = assemble(problem, result.poses, planes);

    // Retry with stronger damping until the step lowers the cost.
    while (true) {
      std::vector<Posed> candidate = result.poses;
      double step_sq = 0.0;
      for (std::size_t k = 0; k < candidate.size(); ++k) {
        if (problem.fixed_frames.count(k)) continue;
        Matrix6<double> damped = eq.h[k];
        const double floor = 1e-8 * std::max(1.0, damped.diagonal().maxCoeff());
        for (int i = 0; i < 6; ++i) damped(i, i) += mu * std::max(damped(i, i), floor);
        const Vector6<double> dx = Eigen::LDLT<Matrix6<double>>(damped).solve(-eq.g[k]);
        if (!dx.allFinite()) {
          step_sq = std::numeric_limits<double>::infinity();
          break;
        }
        step_sq += dx.squaredNorm();
        candidate[k] = candidate[k] * exp_se3(dx);
      }

      const double step_norm = std::sqrt(step_sq);
      if (step_norm < cfg.step_tol) {
        report.converged = true;
        break;
      }

      double attempted = std::isfinite(step_norm) ? cost_at(problem, candidate, planes)
                                                  : std::numeric_limits<double>::infinity();
      if (attempted < current) {
        result.poses = std::move(candidate);
        report.cost_trace.push_back(attempted);
        mu = std::max(mu * cfg.damping_down, 1e-12);
        if (current - attempted <= cfg.rel_tol * current) report.converged = true;
        break;
      }
      mu *= cfg.damping_up;
      if (mu > kDampingMax) {
        throw SingularNormalEquations("solve: damping exhausted without a descending step");
      }
    }
  }

  report.final_cost = report.cost_trace.back();
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace mvreg
