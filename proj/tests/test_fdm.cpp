#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ugfdm/fdm.hpp"
#include "ugfdm/scenario.hpp"

using namespace ugfdm;

namespace {

FdmProblem small_grid(std::size_t nx, std::size_t ny, double h, FdmSides sides = {}) {
  FdmGrid g;
  g.nx = nx;
  g.ny = ny;
  g.dx = g.dy = h;
  return FdmProblem(g, ReservoirModel::uniform(g.size(), 100, 10, 2), sides);
}

std::vector<double> residual_of(const FdmProblem& pb, const SimState& s, const SimState& old, double dt) {
  std::vector<double> r;
  pb.residual(s, old, dt, r);
  return r;
}

}  // namespace

TEST(FdmResidual, UniformStateIsEquilibrium) {
  const FdmProblem pb = small_grid(10, 4, 2.0, {FixedValues{10, 0.2}, FixedValues{10, 0.2}, NoFlow{}, NoFlow{}});
  const SimState s = pb.initial_state(10.0, 0.2);
  EXPECT_LE(inf_norm(residual_of(pb, s, s, 1.0)), 1e-12);
}

TEST(FdmResidual, FixedSidesPinNodes) {
  const FdmProblem pb = small_grid(6, 3, 1.0);
  const SimState s = pb.initial_state(12.0, 0.5);
  EXPECT_EQ(s.p[pb.grid().index(0, 1)], 15.0);
  EXPECT_EQ(s.sw[pb.grid().index(6, 2)], 0.2);
  EXPECT_EQ(s.p[pb.grid().index(3, 0)], 12.0);  // no-flow side stays free
  EXPECT_FALSE(pb.fixed(pb.grid().index(3, 3)).has_value());
}

TEST(FdmJacobian, MatchesCentralDifferences) {
  FdmGrid g;
  g.nx = 4;
  g.ny = 3;
  g.dx = 2.0;
  g.dy = 3.0;
  ReservoirModel m = ReservoirModel::uniform(g.size(), 100, 10, 2);
  m.cr = 1e-3;
  for (std::size_t i = 0; i < g.size(); ++i) m.k[i] = 60.0 + 9.0 * static_cast<double>(i % 7);
  const FdmProblem pb(g, m, FdmSides{});
  const SimState x = oracle::random_state(pb.num_nodes(), 5);
  const SimState old = oracle::random_state(pb.num_nodes(), 6);
  SparseMatrix J = pb.pattern();
  std::vector<double> r;
  pb.jacobian(x, old, 0.4, J, r);
  const Eigen::MatrixXd fd = oracle::fd_jacobian([&](const SimState& y) { return residual_of(pb, y, old, 0.4); }, x, 1e-7);
  EXPECT_LE((Eigen::MatrixXd(J) - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()), 1e-5);
}

TEST(FdmRun, SolutionIsSymmetricAndInvariantInY) {
  const FdmProblem pb = small_grid(10, 4, 2.0);
  TimeControl tc;
  tc.t_end = 20.0;
  const Trajectory tr = run_fdm(pb, 10.0, 0.2, tc);
  const SimState& s = tr.snapshots.back();
  const FdmGrid& g = pb.grid();
  for (std::size_t i = 0; i < g.columns(); ++i) {
    for (std::size_t j = 0; j < g.rows(); ++j) {
      EXPECT_NEAR(s.p[g.index(i, j)], s.p[g.index(i, g.ny - j)], 1e-10);
      EXPECT_NEAR(s.sw[g.index(i, j)], s.sw[g.index(i, 0)], 1e-10);
    }
  }
  // water has entered from the left and saturation falls along the flow
  EXPECT_GT(s.sw[g.index(1, 2)], 0.25);
  for (std::size_t i = 1; i < g.columns(); ++i) EXPECT_LE(s.sw[g.index(i, 2)], s.sw[g.index(i - 1, 2)] + 1e-12);
}

TEST(FdmReference, StripMatchesFullRectangle) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.reference_spacing = 2.0;
  cfg.reference_dt_max = 0.5;
  cfg.reference_y_invariant = true;
  const FieldSnapshot strip = reference_solution(cfg);
  cfg.reference_y_invariant = false;
  const FieldSnapshot full = reference_solution(cfg);
  ASSERT_EQ(strip.rows.size(), full.rows.size());
  const FieldErrors e = compare_fields(strip, full);
  EXPECT_EQ(e.points, full.rows.size());
  EXPECT_LE(e.re_p, 1e-10);
  EXPECT_LE(e.re_sw, 1e-10);
}

TEST(FdmVsGfdm, FivePointCloudReproducesFiniteDifferences) {
  // At radius just over the cell diagonal with mirrored virtual rows, the
  // meshless operators reduce to the same 5-point scheme.
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.radius_multiple = 1.001;
  cfg.time.t_end = 10.0;
  const RunResult g = run_gfdm(cfg);
  const RunResult f = run_fdm_scenario(cfg);
  const FieldErrors e = compare_fields(g.snapshots.back(), f.snapshots.back());
  EXPECT_EQ(e.points, f.snapshots.back().rows.size());
  EXPECT_LE(e.re_p, 1e-9);
  EXPECT_LE(e.re_sw, 1e-9);
  EXPECT_EQ(g.report.cumulative_newton, f.report.cumulative_newton);
}

TEST(RelativeError, Cases) {
  const std::vector<double> a{3, 4}, b{3, 4}, c{0, 0}, d{6, 8};
  EXPECT_EQ(relative_error(a, b), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(c, a), 1.0);
  EXPECT_DOUBLE_EQ(relative_error(d, a), 1.0);
  EXPECT_THROW(relative_error(a, c), Error);
  EXPECT_THROW(relative_error(a, std::vector<double>{1}), Error);
}

TEST(FdmGridValidation, RejectsTinyOrNegativeGrids) {
  EXPECT_THROW(small_grid(1, 4, 1.0), Error);
  EXPECT_THROW(small_grid(4, 4, -1.0), Error);
  FdmGrid g;
  g.nx = g.ny = 3;
  EXPECT_THROW(FdmProblem(g, ReservoirModel::uniform(5, 100, 10, 2), FdmSides{}), Error);
  EXPECT_THROW(FdmProblem(g, ReservoirModel::uniform(g.size(), 100, 10, 2), FdmSides{},
                          std::vector<std::optional<FixedValues>>(3)),
               Error);
}

TEST(FdmScenario, RejectsRobinWithData) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.boundaries[2].p = {1, 1, 0};
  EXPECT_THROW(build_fdm(cfg), Error);
}
