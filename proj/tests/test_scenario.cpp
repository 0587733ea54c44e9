#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "ugfdm/scenario.hpp"

using namespace ugfdm;

namespace {

FieldSnapshot initial_snapshot(const ScenarioConfig& cfg) {
  const GfdmSetup s = build_gfdm(cfg);
  return snapshot_of(s.problem.cloud(), s.initial);
}

FieldSnapshot linear_field(const NodeCloud& c) {
  FieldSnapshot snap;
  for (const Node& n : c.nodes) {
    if (n.kind == NodeKind::Virtual) continue;
    snap.rows.push_back({n.id, n.position.x, n.position.y, n.position.x, 0.5});
  }
  return snap;
}

}  // namespace

TEST(Profile, MidlineOfFloodingCase) {
  const ScenarioConfig cfg = load_config(oracle::config_file("case1.cfg"));
  const FieldSnapshot snap = initial_snapshot(cfg);
  const auto prof = extract_profile(snap, 40.0, 1e-6);
  ASSERT_EQ(prof.size(), 51u);
  EXPECT_EQ(prof.front().x, 0.0);
  EXPECT_EQ(prof.back().x, 200.0);
  EXPECT_EQ(prof.front().sw, 0.8);  // dirichlet nodes start at their values
  EXPECT_EQ(prof[1].sw, 0.2);
  try {
    extract_profile(snap, 41.0, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty profile selection"), std::string::npos);
  }
}

TEST(Profile, IrregularCloudBandIsSorted) {
  const ScenarioConfig cfg = load_config(oracle::config_file("irregular.cfg"));
  const auto prof = extract_profile(initial_snapshot(cfg), 40.0, 2.0);
  ASSERT_FALSE(prof.empty());
  for (std::size_t k = 1; k < prof.size(); ++k) EXPECT_LE(prof[k - 1].x, prof[k].x);
}

TEST(Profile, CrossingAndWidth) {
  const std::vector<ProfilePoint> prof{{0, 0, 0.8}, {10, 0, 0.7}, {20, 0, 0.5}, {30, 0, 0.2}};
  EXPECT_DOUBLE_EQ(crossing_position(prof, 0.7), 10.0);
  EXPECT_DOUBLE_EQ(crossing_position(prof, 0.3), 20.0 + 10.0 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(front_width(prof), 20.0 / 3.0 + 10.0);
  EXPECT_TRUE(std::isnan(crossing_position(prof, 0.1)));
}

TEST(Lattice, ExactAtCoincidentNodes) {
  const NodeCloud c = generate_cartesian_cloud(20, 8, 4, 4, SideKinds{});
  FieldSnapshot snap = linear_field(c);
  for (auto& r : snap.rows) r.sw = 0.1 * static_cast<double>(r.id % 7);
  const LatticeField lat = interpolate_to_lattice(snap, rectangle_polygon(20, 8), 4.0);
  ASSERT_EQ(lat.size(), c.size());
  for (std::size_t k = 0; k < lat.size(); ++k) {
    EXPECT_EQ(lat.p[k], snap.rows[k].p);
    EXPECT_EQ(lat.sw[k], snap.rows[k].sw);
  }
}

TEST(Lattice, ConstantAndLinearFields) {
  const ScenarioConfig cfg = load_config(oracle::config_file("irregular.cfg"));
  const FieldSnapshot snap = linear_field(build_cloud(cfg));
  const LatticeField lat = interpolate_to_lattice(snap, cfg.polygon(), 1.0);
  std::size_t inside = 0;
  for (std::size_t j = 0; j < lat.ny; ++j) {
    for (std::size_t i = 0; i < lat.nx; ++i) {
      const Vec2 q = lat.position(i, j);
      const std::size_t k = lat.index(i, j);
      const bool in = point_in_closed_polygon(q, cfg.polygon(), 1e-9 * 200);
      EXPECT_EQ(std::isnan(lat.p[k]), !in);
      if (!in) continue;
      ++inside;
      EXPECT_EQ(lat.sw[k], 0.5);
      // weights of nearby nodes only, so a linear field is reproduced to
      // within a fraction of the node spacing
      EXPECT_NEAR(lat.p[k], q.x, 4.0);
    }
  }
  EXPECT_GT(inside, 0u);
}

TEST(Lattice, LinearFieldOnRegularLatticeMidpoints) {
  const NodeCloud c = generate_cartesian_cloud(40, 40, 4, 4, SideKinds{});
  const LatticeField lat = interpolate_to_lattice(linear_field(c), rectangle_polygon(40, 40), 2.0);
  for (std::size_t j = 2; j + 2 < lat.ny; ++j)
    for (std::size_t i = 2; i + 2 < lat.nx; ++i)
      EXPECT_NEAR(lat.p[lat.index(i, j)], lat.position(i, j).x, 1e-3);  // symmetric neighbours
}

TEST(Diagnose, AllNodesExcludesVirtual) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.x_extent = 40;
  cfg.y_extent = 16;
  const NodeCloud c = build_cloud(cfg);
  const auto rows = diagnose(cfg, "all");
  EXPECT_EQ(rows.size(), c.size() - c.n_virtual);
  const double r_e = cfg.influence_radius();
  for (const auto& r : rows) {
    EXPECT_FALSE(r.degenerate);
    // clear of the dirichlet sides, which carry no virtual nodes
    if (r.kind == NodeKind::Interior && r.x >= r_e && r.x <= cfg.x_extent - r_e) {
      EXPECT_NEAR(r.quality.centroid_offset, 0.0, 1e-12);
    }
  }
  EXPECT_EQ(diagnose(cfg, "interior").size(), c.n_interior);
  EXPECT_EQ(diagnose(cfg, "3,7-9").size(), 4u);
  EXPECT_THROW(diagnose(cfg, "999"), Error);
  EXPECT_THROW(diagnose(cfg, "a-b"), Error);
}

TEST(Diagnose, FlagsDegenerateFixtureStencil) {
  const ScenarioConfig cfg = load_config(oracle::fixture("edge_stencil_plain_r15.cfg"));
  const auto rows = diagnose(cfg, "2");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].degenerate);
  std::ostringstream os;
  write_diagnose_csv(os, rows);
  EXPECT_NE(os.str().find(",1\n"), std::string::npos);
}

TEST(Convergence, InputErrors) {
  const ScenarioConfig cfg = oracle::tiny_config();
  EXPECT_THROW(convergence_study(cfg, {}, 1.5), Error);
  EXPECT_THROW(convergence_study(cfg, {2, 4}, 1.5), Error);
  EXPECT_THROW(convergence_study(cfg, {4, -2}, 1.5), Error);
  EXPECT_THROW(convergence_study(cfg, {4}, 1.0), Error);
}

TEST(Convergence, SpacingEqualToReferenceIsNearlyExact) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.reference_spacing = 2.0;
  cfg.reference_dt_max = cfg.time.dt_max;
  const auto dir = std::filesystem::temp_directory_path() / "ugfdm_conv_test";
  std::filesystem::create_directories(dir);
  const std::string csv = (dir / "conv.csv").string();
  const ConvergenceResult res = convergence_study(cfg, {2.0}, 1.001 * std::sqrt(2.0), csv);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_LT(res.rows[0].fdm.re_p, 1e-12);
  EXPECT_LT(res.rows[0].gfdm.re_p, 1e-3);
  EXPECT_TRUE(std::filesystem::exists(csv));
  std::filesystem::remove_all(dir);
}

TEST(Convergence, LogLogSlope) { EXPECT_DOUBLE_EQ(loglog_slope(4, 0.04, 2, 0.01), 2.0); }

TEST(Snapshot, CsvRoundTrip) {
  FieldSnapshot snap;
  snap.t = 250;
  snap.rows = {{0, 0.0, 1.0, 12.5, 0.3333333333333333}, {5, 4.0, 1.0, 10.000000000000002, 0.2}};
  std::stringstream ss;
  write_snapshot_csv(ss, snap);
  EXPECT_EQ(read_snapshot_csv(ss), snap);
  std::stringstream bad("x,y\n");
  EXPECT_THROW(read_snapshot_csv(bad), Error);
}

TEST(Snapshot, VtkHasPointData) {
  FieldSnapshot snap;
  snap.rows = {{0, 0, 0, 1, 0.2}, {1, 1, 0, 2, 0.3}};
  std::ostringstream os;
  write_snapshot_vtk(os, snap);
  EXPECT_NE(os.str().find("POINTS 2"), std::string::npos);
  EXPECT_NE(os.str().find("POINT_DATA 2"), std::string::npos);
}

TEST(Compare, IdenticalAndShiftedFields) {
  FieldSnapshot a;
  for (int i = 0; i < 5; ++i) a.rows.push_back({static_cast<std::size_t>(i), 4.0 * i, 0, 10.0 + i, 0.5});
  FieldSnapshot b = a;
  std::reverse(b.rows.begin(), b.rows.end());
  Comparison c = compare(a, b, 0.0);
  EXPECT_EQ(c.errors.re_p, 0.0);
  EXPECT_EQ(c.errors.points, 5u);
  ASSERT_EQ(c.profile.size(), 5u);
  EXPECT_EQ(c.profile[2].x, 8.0);
  for (auto& r : b.rows) r.sw = 0.6;
  c = compare(b, a);
  EXPECT_DOUBLE_EQ(c.errors.re_sw, 0.2);
  EXPECT_THROW(compare(a, b, 3.0), Error);
}

TEST(Surrogate, PinsOutsideAndDirichletEdges) {
  const ScenarioConfig cfg = load_config(oracle::config_file("irregular.cfg"));
  const FdmSetup s = build_fdm_surrogate(cfg, 4.0);
  const FdmGrid& g = s.problem.grid();
  EXPECT_EQ(g.nx, 50u);
  EXPECT_EQ(g.ny, 20u);
  // (0, 40) is outside, nearest the inflow edges
  const auto left = s.problem.fixed(g.index(0, 10));
  ASSERT_TRUE(left);
  EXPECT_EQ(left->p, 15.0);
  // (200, 40) is outside, nearest the outflow edges
  const auto right = s.problem.fixed(g.index(50, 10));
  ASSERT_TRUE(right);
  EXPECT_EQ(right->sw, 0.2);
  // interior and wall nodes are free
  EXPECT_FALSE(s.problem.fixed(g.index(25, 10)));
  EXPECT_FALSE(s.problem.fixed(g.index(25, 0)));
  // corner (0, 0) lies on the inflow edge
  EXPECT_TRUE(s.problem.fixed(g.index(0, 0)));
}

TEST(Outputs, EnvironmentOverridesDirectory) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.output_dir = "configured";
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(output_directory(cfg), "configured");
  ::setenv(kOutputDirEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(output_directory(cfg), "/tmp/elsewhere");
  ::unsetenv(kOutputDirEnv);
}

TEST(Outputs, RunWritesSnapshotsAndReport) {
  ScenarioConfig cfg = oracle::tiny_config();
  cfg.output_times = {2.0};
  cfg.vtk = true;
  cfg.lattice_spacing = 2.0;
  const RunResult res = run_gfdm(cfg);
  ASSERT_EQ(res.snapshots.size(), 3u);
  const auto dir = std::filesystem::temp_directory_path() / "ugfdm_out_test";
  write_run_outputs(cfg, res, dir.string(), "gfdm");
  EXPECT_TRUE(std::filesystem::exists(dir / "gfdm_t2.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "gfdm_t5.vtk"));
  EXPECT_TRUE(std::filesystem::exists(dir / "gfdm_t5_lattice.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "gfdm_report.csv"));
  EXPECT_EQ(read_snapshot_csv((dir / "gfdm_t5.csv").string()), res.snapshots.back());
  std::filesystem::remove_all(dir);
}
