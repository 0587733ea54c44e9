#pragma once

// Fully implicit time marching: Newton on the assembled residual with a sparse
// direct solve per iteration and a grow/cut time-step controller.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "ugfdm/error.hpp"
#include "ugfdm/physics.hpp"
#include "ugfdm/sparse.hpp"

namespace ugfdm {

template <class P>
concept NonlinearProblem = requires(const P& p, const SimState& s, double dt, std::vector<double>& r, SparseMatrix& J) {
  { p.num_nodes() } -> std::convertible_to<std::size_t>;
  { p.pattern() } -> std::convertible_to<const SparseMatrix&>;
  p.residual(s, s, dt, r);
  p.jacobian(s, s, dt, J, r);
};

struct TimeControl {
  double dt_init = 0.01;
  double dt_max = 2.0;
  double t_end = 500.0;
  double newton_tol = 1e-6;
  int max_newton = 20;
  double dt_grow = 1.5;
  double dt_cut = 0.5;
  int max_cuts = 10;

  void validate() const {
    std::vector<std::string> problems;
    if (!(dt_init > 0.0 && dt_init <= dt_max)) problems.emplace_back("need 0 < dt_init <= dt_max");
    if (!(newton_tol > 0.0)) problems.emplace_back("newton_tol must be positive");
    if (max_newton < 1) problems.emplace_back("max_newton must be at least 1");
    if (!(dt_grow > 1.0)) problems.emplace_back("dt_grow must exceed 1");
    if (!(dt_cut > 0.0 && dt_cut < 1.0)) problems.emplace_back("dt_cut must lie in (0, 1)");
    if (!(t_end >= 0.0)) problems.emplace_back("t_end must be non-negative");
    if (!problems.empty()) {
      std::string msg = "invalid time control:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw config_error(msg);
    }
  }
};

struct StepRecord {
  double t = 0.0;   // time at the end of the step
  double dt = 0.0;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct SolverReport {
  std::vector<StepRecord> steps;
  long cumulative_newton = 0;
  long rejected_newton = 0;  // iterations spent in attempts that were cut
  int cuts = 0;
  double wall_seconds = 0.0;

  /// Equality of everything except timing.
  bool same_trajectory(const SolverReport& o) const {
    return steps == o.steps && cumulative_newton == o.cumulative_newton && rejected_newton == o.rejected_newton &&
           cuts == o.cuts;
  }
};

inline void write_report_csv(std::ostream& os, const SolverReport& rep) {
  os << "step,t,dt,newton_iterations,residual_norm\n" << std::setprecision(17);
  for (std::size_t k = 0; k < rep.steps.size(); ++k) {
    const StepRecord& s = rep.steps[k];
    os << k + 1 << ',' << s.t << ',' << s.dt << ',' << s.newton_iterations << ',' << s.residual_norm << '\n';
  }
}

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(x));
  }
  return m;
}

struct StepResult {
  SimState state;
  double dt = 0.0;
  double dt_next = 0.0;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  int cuts = 0;
  long rejected_newton = 0;
};

template <NonlinearProblem Problem>
class NewtonSolver {
 public:
  explicit NewtonSolver(const Problem& problem) : problem_(problem), jac_(problem.pattern()) {
    lu_.analyzePattern(jac_);
  }

  /// One full Newton update. Returns the new iterate's residual infinity norm.
  double newton_step(SimState& state, const SimState& old, double dt) {
    problem_.jacobian(state, old, dt, jac_, r_);
    lu_.factorize(jac_);
    if (lu_.info() != Eigen::Success) throw solver_error("linear solve failed: singular jacobian");
    const Eigen::Map<const Eigen::VectorXd> rhs(r_.data(), static_cast<Eigen::Index>(r_.size()));
    const Eigen::VectorXd delta = lu_.solve(-rhs);
    if (lu_.info() != Eigen::Success || !delta.allFinite()) throw solver_error("linear solve produced no solution");
    for (std::size_t i = 0; i < state.size(); ++i) {
      state.p[i] += delta(static_cast<Eigen::Index>(2 * i));
      state.sw[i] += delta(static_cast<Eigen::Index>(2 * i + 1));
    }
    return residual_norm(state, old, dt);
  }

  double residual_norm(const SimState& state, const SimState& old, double dt) {
    problem_.residual(state, old, dt, r_);
    return inf_norm(r_);
  }

  /// Newton loop from `old` over one step of size dt. Returns the iteration
  /// count, or -1 when the cap is exceeded or the iteration breaks down.
  int solve_step(SimState& state, const SimState& old, double dt, const TimeControl& tc, double& norm_out,
                 int& spent) {
    spent = 0;
    try {
      double norm = residual_norm(state, old, dt);
      int it = 0;
      while (!(norm <= tc.newton_tol)) {
        if (it == tc.max_newton || !std::isfinite(norm) || norm > 1e12) {
          norm_out = norm;
          return -1;
        }
        norm = newton_step(state, old, dt);
        spent = ++it;
      }
      norm_out = norm;
      return it;
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Solver) throw;
      norm_out = std::numeric_limits<double>::infinity();
      return -1;
    }
  }

  /// Advances from `old` by at most dt, cutting the step on failure.
  StepResult advance(const SimState& old, double dt, const TimeControl& tc, double dt_clip) {
    StepResult res;
    double attempt = std::min(dt, dt_clip);
    for (int cut = 0;; ++cut) {
      SimState state = old;
      state.t = old.t + attempt;
      double norm = 0.0;
      int spent = 0;
      const int its = solve_step(state, old, attempt, tc, norm, spent);
      if (its >= 0) {
        res.state = std::move(state);
        res.dt = attempt;
        res.newton_iterations = its;
        res.residual_norm = norm;
        res.cuts = cut;
        const double base = cut > 0 ? attempt : dt;
        res.dt_next = std::min(base * tc.dt_grow, tc.dt_max);
        return res;
      }
      res.rejected_newton += spent;
      if (cut == tc.max_cuts) {
        throw solver_error("time step collapse at t = " + std::to_string(old.t) + " after " +
                           std::to_string(tc.max_cuts) + " cuts (last dt = " + std::to_string(attempt) +
                           ", residual norm = " + std::to_string(norm) + ")");
      }
      attempt *= tc.dt_cut;
    }
  }

 private:
  const Problem& problem_;
  SparseMatrix jac_;
  std::vector<double> r_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

struct Trajectory {
  std::vector<SimState> snapshots;  // initial state, then every output time reached
  SolverReport report;
};

/// Marches from the initial state to tc.t_end, landing exactly on each
/// output time by shortening the step that would overshoot it.
template <NonlinearProblem Problem>
Trajectory simulate(const Problem& problem, SimState initial, const TimeControl& tc,
                    std::vector<double> output_times = {}) {
  tc.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Trajectory traj;
  traj.snapshots.push_back(initial);
  std::sort(output_times.begin(), output_times.end());
  std::vector<double> targets;
  for (double t : output_times) {
    if (t > initial.t && t < tc.t_end) targets.push_back(t);
  }
  if (tc.t_end > initial.t) targets.push_back(tc.t_end);

  NewtonSolver<Problem> solver(problem);
  SimState state = std::move(initial);
  double dt = tc.dt_init;
  for (double target : targets) {
    while (state.t < target) {
      const double remaining = target - state.t;
      const bool last = dt >= remaining * (1.0 - 1e-12);
      StepResult step = solver.advance(state, dt, tc, remaining);
      const bool clipped = last && step.cuts == 0;
      state = std::move(step.state);
      if (clipped || std::abs(target - state.t) <= 1e-12 * std::max(1.0, target)) state.t = target;
      traj.report.steps.push_back({state.t, step.dt, step.newton_iterations, step.residual_norm});
      traj.report.cumulative_newton += step.newton_iterations;
      traj.report.rejected_newton += step.rejected_newton;
      traj.report.cuts += step.cuts;
      // a step shortened only to hit an output time does not shrink the controller
      dt = clipped ? std::max(dt, step.dt_next) : step.dt_next;
      dt = std::min(dt, tc.dt_max);
    }
    traj.snapshots.push_back(state);
  }
  traj.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return traj;
}

}  // namespace ugfdm
