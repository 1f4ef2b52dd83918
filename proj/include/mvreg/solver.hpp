#pragma once

#include <cstddef>
#include <set>
#include <vector>

#include "mvreg/geometry.hpp"
#include "mvreg/objective.hpp"

namespace mvreg {

enum class ObjectiveKind { Proposed, EfLm };

struct SolverConfig {
  int max_iters = 100;
  double rel_tol = 1e-8;
  double step_tol = 1e-10;
  double damping_init = 1e-4;   // scales diag(J^T J), dimensionless
  double damping_up = 4.0;      // on rejected steps
  double damping_down = 0.5;    // on accepted steps
};

/// State and observations for one multiview alignment. Each inner vector of
/// `features` holds every frame's observation of one planar feature; the
/// feature's plane itself is not part of the state, it is re-fitted from the
/// aggregate once per outer iteration.
struct Problem {
  std::vector<Posed> poses;
  std::vector<std::vector<FeatureObservationd>> features;
  std::set<std::size_t> fixed_frames = {0};
  ObjectiveKind objective = ObjectiveKind::Proposed;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::vector<double> cost_trace;  // initial cost, then one entry per accepted step
  double wall_time = 0.0;          // seconds
};

struct SolveResult {
  std::vector<Posed> poses;
  SolveReport report;
};

/// Damped least squares over the stacked per-frame twists. Outer iteration:
/// re-fit every feature's plane, linearize all residuals about the current
/// poses, then retry the damped normal-equation step until the cost drops.
/// Throws InvalidProblem on a malformed problem and SingularNormalEquations
/// when no damping value in (0, 1e8] yields a cost-decreasing step.
SolveResult solve(const Problem& problem, const SolverConfig& cfg = {});

/// Total objective value at the given poses with per-feature planes fitted
/// from the current aggregates (the quantity solve() drives down).
double evaluate_cost(const Problem& problem, const std::vector<Posed>& poses);

}  // namespace mvreg
