#include <gtest/gtest.h>

#include <cmath>

#include "ugfdm/solver.hpp"

using namespace ugfdm;

namespace {

// Decoupled backward-Euler decay: (u - u_old)/dt + c*u^3 = 0 per unknown.
// `no_root` replaces the equation by u^2 + 1 = 0, which Newton never solves.
struct DecayProblem {
  std::size_t n = 3;
  double c = 1.0;
  bool no_root = false;
  SparseMatrix pat;

  DecayProblem() {
    std::vector<std::pair<int, int>> e;
    for (int k = 0; k < static_cast<int>(2 * n); ++k) e.emplace_back(k, k);
    pat = make_pattern(2 * n, e);
  }
  std::size_t num_nodes() const { return n; }
  const SparseMatrix& pattern() const { return pat; }

  double f(double u, double u_old, double dt) const {
    return no_root ? u * u + 1.0 : (u - u_old) / dt + c * u * u * u;
  }
  double df(double u, double dt) const { return no_root ? 2.0 * u : 1.0 / dt + 3.0 * c * u * u; }

  void residual(const SimState& s, const SimState& old, double dt, std::vector<double>& r) const {
    r.assign(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      r[2 * i] = f(s.p[i], old.p[i], dt);
      r[2 * i + 1] = f(s.sw[i], old.sw[i], dt);
    }
  }
  void jacobian(const SimState& s, const SimState& old, double dt, SparseMatrix& J, std::vector<double>& r) const {
    if (J.nonZeros() != pat.nonZeros()) J = pat;
    zero_values(J);
    residual(s, old, dt, r);
    for (std::size_t i = 0; i < n; ++i) {
      add_entry(J, static_cast<int>(2 * i), static_cast<int>(2 * i), df(s.p[i], dt));
      add_entry(J, static_cast<int>(2 * i + 1), static_cast<int>(2 * i + 1), df(s.sw[i], dt));
    }
  }
};

SimState start() { return {{1.0, 2.0, 0.5}, {0.3, 0.6, 0.9}, 0.0}; }

}  // namespace

static_assert(NonlinearProblem<DecayProblem>);

TEST(Simulate, LandsExactlyOnOutputTimes) {
  DecayProblem pb;
  TimeControl tc;
  tc.dt_init = 0.07;
  tc.dt_max = 0.5;
  tc.t_end = 3.0;
  const Trajectory tr = simulate(pb, start(), tc, {1.0, 0.35, 2.2});
  ASSERT_EQ(tr.snapshots.size(), 5u);
  EXPECT_EQ(tr.snapshots[0].t, 0.0);
  EXPECT_EQ(tr.snapshots[1].t, 0.35);
  EXPECT_EQ(tr.snapshots[2].t, 1.0);
  EXPECT_EQ(tr.snapshots[3].t, 2.2);
  EXPECT_EQ(tr.snapshots[4].t, 3.0);
}

TEST(Simulate, StepControllerContract) {
  DecayProblem pb;
  TimeControl tc;
  tc.dt_init = 0.01;
  tc.dt_max = 0.4;
  tc.t_end = 10.0;
  const Trajectory tr = simulate(pb, start(), tc);
  ASSERT_FALSE(tr.report.steps.empty());
  EXPECT_DOUBLE_EQ(tr.report.steps[0].dt, 0.01);
  EXPECT_DOUBLE_EQ(tr.report.steps[1].dt, 0.015);
  double prev_t = 0.0;
  long total = 0;
  for (const StepRecord& s : tr.report.steps) {
    EXPECT_LE(s.dt, tc.dt_max * (1 + 1e-15));
    EXPECT_GT(s.t, prev_t);
    EXPECT_LE(s.residual_norm, tc.newton_tol);
    prev_t = s.t;
    total += s.newton_iterations;
  }
  EXPECT_EQ(total, tr.report.cumulative_newton);
  EXPECT_EQ(tr.report.cuts, 0);
  // the decay is monotone toward zero
  for (std::size_t k = 1; k < tr.snapshots.size(); ++k) EXPECT_LT(tr.snapshots[k].p[1], tr.snapshots[k - 1].p[1]);
}

TEST(Simulate, MatchesHandRolledBackwardEuler) {
  DecayProblem pb;
  TimeControl tc;
  tc.dt_init = 0.25;
  tc.dt_max = 0.25;
  tc.t_end = 1.0;
  tc.newton_tol = 1e-13;
  const Trajectory tr = simulate(pb, start(), tc);
  double u = 2.0;
  for (int k = 0; k < 4; ++k) {
    const double u_old = u;
    for (int it = 0; it < 50; ++it) u -= ((u - u_old) / 0.25 + u * u * u) / (1 / 0.25 + 3 * u * u);
  }
  EXPECT_NEAR(tr.snapshots.back().p[1], u, 1e-12);
}

TEST(Simulate, StiffStepIsCutThenRecovers) {
  DecayProblem pb;
  pb.c = 5.0;
  TimeControl tc;
  tc.dt_init = 2.0;
  tc.dt_max = 2.0;
  tc.t_end = 4.0;
  tc.max_newton = 4;
  const Trajectory tr = simulate(pb, start(), tc);
  EXPECT_GT(tr.report.cuts, 0);
  EXPECT_GT(tr.report.rejected_newton, 0);
  EXPECT_EQ(tr.snapshots.back().t, 4.0);
}

TEST(Simulate, CollapseRaisesSolverError) {
  DecayProblem pb;
  pb.no_root = true;
  TimeControl tc;
  tc.t_end = 1.0;
  tc.max_cuts = 3;
  try {
    simulate(pb, start(), tc);
    FAIL() << "expected a collapse";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Solver);
    EXPECT_NE(std::string(e.what()).find("collapse"), std::string::npos);
    EXPECT_EQ(exit_code(e.category()), 3);
  }
}

TEST(Simulate, RerunsAreIdentical) {
  DecayProblem pb;
  TimeControl tc;
  tc.t_end = 7.3;
  const Trajectory a = simulate(pb, start(), tc, {1.1, 5.0});
  const Trajectory b = simulate(pb, start(), tc, {1.1, 5.0});
  EXPECT_TRUE(a.report.same_trajectory(b.report));
  ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    EXPECT_EQ(a.snapshots[k].p, b.snapshots[k].p);
    EXPECT_EQ(a.snapshots[k].sw, b.snapshots[k].sw);
  }
}

TEST(TimeControlValidation, RejectsBadSettings) {
  TimeControl tc;
  tc.dt_init = 5.0;
  tc.dt_max = 1.0;
  tc.dt_cut = 1.5;
  try {
    tc.validate();
    FAIL();
  } catch (const Error& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("dt_init"), std::string::npos);
    EXPECT_NE(w.find("dt_cut"), std::string::npos);
  }
}

TEST(ReportCsv, HeaderAndRows) {
  SolverReport rep;
  rep.steps.push_back({0.5, 0.5, 3, 1e-8});
  std::ostringstream os;
  write_report_csv(os, rep);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "step,t,dt,newton_iterations,residual_norm");
  EXPECT_NE(os.str().find("1,0.5,0.5,3,"), std::string::npos);
}
