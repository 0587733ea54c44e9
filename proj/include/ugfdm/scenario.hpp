#pragma once

// Scenario plumbing: problems built from a configuration, field snapshots,
// profile and lattice extraction, and the study drivers.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ugfdm/assembly.hpp"
#include "ugfdm/cloud.hpp"
#include "ugfdm/config.hpp"
#include "ugfdm/fdm.hpp"
#include "ugfdm/operators.hpp"
#include "ugfdm/solver.hpp"

namespace ugfdm {

inline constexpr const char* kOutputDirEnv = "UGFDM_OUTPUT_DIR";

/// Output directory, honouring the environment override.
inline std::string output_directory(const ScenarioConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

// ---- building problems ------------------------------------------------------

inline BoundarySpec to_boundary_spec(const BoundaryGroup& g) {
  auto one = [&](const std::vector<double>& v) -> VariableBC {
    if (g.kind == BoundaryKind::Dirichlet) return DirichletValue{v.at(0)};
    return RobinCoeffs{v.at(0), v.at(1), v.at(2)};
  };
  return {one(g.p), one(g.sw)};
}

inline std::vector<BoundaryKind> edge_kinds(const ScenarioConfig& cfg) {
  const std::size_t n_edges = cfg.domain_type == "rectangle" ? 4 : cfg.vertices.size();
  std::vector<BoundaryKind> kinds(n_edges, BoundaryKind::Robin);
  for (const BoundaryGroup& g : cfg.boundaries) {
    for (const std::string& s : g.segments) {
      if (auto idx = resolve_segment(cfg, s)) kinds[static_cast<std::size_t>(*idx)] = g.kind;
    }
  }
  return kinds;
}

inline std::map<int, BoundarySpec> segment_specs(const ScenarioConfig& cfg) {
  std::map<int, BoundarySpec> out;
  for (const BoundaryGroup& g : cfg.boundaries) {
    for (const std::string& s : g.segments) {
      if (auto idx = resolve_segment(cfg, s)) out[*idx] = to_boundary_spec(g);
    }
  }
  return out;
}

/// Cloud with virtual nodes appended.
inline NodeCloud build_cloud(const ScenarioConfig& cfg) {
  NodeCloud base;
  if (cfg.cloud_type == "cartesian") {
    const auto k = edge_kinds(cfg);
    SideKinds sides;
    sides.bottom = k[kBottom];
    sides.right = k[kRight];
    sides.top = k[kTop];
    sides.left = k[kLeft];
    base = generate_cartesian_cloud(cfg.x_extent, cfg.y_extent, cfg.dx, cfg.dy, sides);
  } else if (cfg.cloud_type == "irregular") {
    base = generate_irregular_cloud(cfg.polygon(), edge_kinds(cfg), {cfg.spacing, cfg.seed, cfg.jitter});
  } else {
    base = read_cloud_csv(cfg.cloud_file);
    // CSV clouds are used as given, virtual nodes included. They carry no
    // segment tags, so boundary groups are matched by kind.
    for (Node& n : base.nodes) {
      if (n.kind == NodeKind::Dirichlet) n.segment = 0;
      if (n.kind == NodeKind::Robin || n.kind == NodeKind::Virtual) n.segment = 1;
    }
    return base;
  }
  return add_virtual_nodes(base, cfg.virtual_offset.value_or(cfg.nominal_spacing()));
}

inline std::vector<std::optional<BoundarySpec>> build_specs(const ScenarioConfig& cfg, const NodeCloud& cloud) {
  if (cfg.cloud_type != "csv") return node_specs_from_segments(cloud, segment_specs(cfg));
  std::map<int, BoundarySpec> by_kind;
  for (const BoundaryGroup& g : cfg.boundaries) {
    const int tag = g.kind == BoundaryKind::Dirichlet ? 0 : 1;
    if (by_kind.count(tag)) throw config_error("csv clouds allow one boundary group per kind");
    by_kind[tag] = to_boundary_spec(g);
  }
  return node_specs_from_segments(cloud, by_kind);
}

inline ReservoirModel build_model(const ScenarioConfig& cfg, std::size_t n) {
  ReservoirModel m = ReservoirModel::uniform(n, cfg.permeability, cfg.mu_o, cfg.mu_w);
  m.q_o.assign(n, cfg.q_o);
  m.q_w.assign(n, cfg.q_w);
  m.phi0 = cfg.porosity;
  m.cr = cfg.compressibility;
  m.p_ref = cfg.p_ref;
  m.swc = cfg.swc;
  m.sor = cfg.sor;
  m.alpha = cfg.alpha;
  return m;
}

struct GfdmSetup {
  GfdmProblem problem;
  SimState initial;
};

inline GfdmSetup build_gfdm(const ScenarioConfig& cfg) {
  validate(cfg);
  NodeCloud cloud = build_cloud(cfg);
  auto specs = build_specs(cfg, cloud);
  DiffOperators ops = build_operators(cloud, cfg.influence_radius());
  ReservoirModel model = build_model(cfg, cloud.size());
  SimState init = initial_state(cloud, cfg.p_init, cfg.sw_init, specs);
  GfdmProblem problem(std::move(cloud), std::move(ops), std::move(model), std::move(specs));
  return {std::move(problem), std::move(init)};
}

inline bool is_no_flow(const BoundaryGroup& g) {
  return g.kind == BoundaryKind::Robin && g.p.size() == 3 && g.sw.size() == 3 && g.p[0] == 0.0 && g.p[2] == 0.0 &&
         g.p[1] != 0.0 && g.sw[0] == 0.0 && g.sw[2] == 0.0 && g.sw[1] != 0.0;
}

inline FdmSideBC fdm_side(const BoundaryGroup& g) {
  if (g.kind == BoundaryKind::Dirichlet) return FixedValues{g.p.at(0), g.sw.at(0)};
  if (is_no_flow(g)) return NoFlow{};
  throw config_error("boundary." + g.name + ": the finite-difference solver supports dirichlet and no-flow sides only");
}

inline const BoundaryGroup& group_of_segment(const ScenarioConfig& cfg, int edge) {
  for (const BoundaryGroup& g : cfg.boundaries) {
    for (const std::string& s : g.segments) {
      if (resolve_segment(cfg, s) == edge) return g;
    }
  }
  throw config_error("segment " + std::to_string(edge) + " has no boundary group");
}

inline FdmSides fdm_sides(const ScenarioConfig& cfg) {
  FdmSides s;
  s.bottom = fdm_side(group_of_segment(cfg, kBottom));
  s.right = fdm_side(group_of_segment(cfg, kRight));
  s.top = fdm_side(group_of_segment(cfg, kTop));
  s.left = fdm_side(group_of_segment(cfg, kLeft));
  return s;
}

inline std::size_t grid_divisions(double extent, double step, const char* what) {
  const double n = extent / step;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw config_error(std::string(what) + " extent is not a multiple of the grid spacing");
  }
  return static_cast<std::size_t>(r);
}

struct FdmSetup {
  FdmProblem problem;
  SimState initial;
};

/// Finite-difference problem on the configured rectangle with grid steps
/// dx, dy (the cloud spacing unless overridden).
inline FdmSetup build_fdm(const ScenarioConfig& cfg, std::optional<double> dx = {}, std::optional<double> dy = {}) {
  validate(cfg);
  if (cfg.domain_type != "rectangle") {
    throw config_error("the finite-difference solver needs a rectangular domain; use the surrogate for polygons");
  }
  FdmGrid grid;
  grid.dx = dx.value_or(cfg.cloud_type == "cartesian" ? cfg.dx : cfg.spacing);
  grid.dy = dy.value_or(cfg.cloud_type == "cartesian" ? cfg.dy : cfg.spacing);
  grid.nx = grid_divisions(cfg.x_extent, grid.dx, "x");
  grid.ny = grid_divisions(cfg.y_extent, grid.dy, "y");
  FdmProblem problem(grid, build_model(cfg, grid.size()), fdm_sides(cfg));
  SimState init = problem.initial_state(cfg.p_init, cfg.sw_init);
  return {std::move(problem), std::move(init)};
}

/// Finite-difference stand-in for a polygonal domain: the bounding-box grid
/// with every grid node outside the polygon, or on a Dirichlet edge, pinned
/// to the values of the nearest Dirichlet edge. No-flow edges must lie on
/// the bounding box, where they become mirrored sides.
inline FdmSetup build_fdm_surrogate(const ScenarioConfig& cfg, double step) {
  validate(cfg);
  const Polygon poly = cfg.polygon();
  const BoundingBox bb = bounding_box(poly);
  const auto kinds = edge_kinds(cfg);
  const double tol = 1e-9 * std::max(bb.hi.x - bb.lo.x, bb.hi.y - bb.lo.y);
  for (std::size_t e = 0; e < poly.size(); ++e) {
    if (kinds[e] != BoundaryKind::Robin) continue;
    const Vec2 a = poly[e], b = poly[(e + 1) % poly.size()];
    const bool on_box = (std::abs(a.x - b.x) <= tol && (std::abs(a.x - bb.lo.x) <= tol || std::abs(a.x - bb.hi.x) <= tol)) ||
                        (std::abs(a.y - b.y) <= tol && (std::abs(a.y - bb.lo.y) <= tol || std::abs(a.y - bb.hi.y) <= tol));
    if (!on_box || !is_no_flow(group_of_segment(cfg, static_cast<int>(e)))) {
      throw config_error("surrogate needs every robin edge to be a no-flow edge on the bounding box");
    }
  }
  FdmGrid grid;
  grid.dx = grid.dy = step;
  grid.nx = grid_divisions(bb.hi.x - bb.lo.x, step, "x");
  grid.ny = grid_divisions(bb.hi.y - bb.lo.y, step, "y");
  std::vector<std::optional<FixedValues>> fixed(grid.size());
  for (std::size_t id = 0; id < grid.size(); ++id) {
    const Vec2 p = bb.lo + grid.position(id);
    double best = std::numeric_limits<double>::infinity();
    std::optional<FixedValues> value;
    for (std::size_t e = 0; e < poly.size(); ++e) {
      if (kinds[e] != BoundaryKind::Dirichlet) continue;
      const double d = distance_to_segment(p, poly[e], poly[(e + 1) % poly.size()]);
      if (d < best) {
        best = d;
        const BoundaryGroup& g = group_of_segment(cfg, static_cast<int>(e));
        value = FixedValues{g.p.at(0), g.sw.at(0)};
      }
    }
    const bool inside = point_in_closed_polygon(p, poly, tol);
    if (value && (!inside || best <= tol)) fixed[id] = value;
  }
  FdmSides sides{NoFlow{}, NoFlow{}, NoFlow{}, NoFlow{}};
  FdmProblem problem(grid, build_model(cfg, grid.size()), sides, std::move(fixed));
  SimState init = problem.initial_state(cfg.p_init, cfg.sw_init);
  return {std::move(problem), std::move(init)};
}

// ---- snapshots ---------------------------------------------------------------

struct FieldRow {
  std::size_t id = 0;
  double x = 0.0, y = 0.0, p = 0.0, sw = 0.0;
  friend bool operator==(const FieldRow&, const FieldRow&) = default;
};

struct FieldSnapshot {
  double t = 0.0;
  std::vector<FieldRow> rows;
  friend bool operator==(const FieldSnapshot&, const FieldSnapshot&) = default;
};

inline FieldSnapshot snapshot_of(const NodeCloud& cloud, const SimState& s) {
  FieldSnapshot snap;
  snap.t = s.t;
  for (const Node& n : cloud.nodes) {
    if (n.kind == NodeKind::Virtual) continue;
    snap.rows.push_back({n.id, n.position.x, n.position.y, s.p[n.id], s.sw[n.id]});
  }
  return snap;
}

inline FieldSnapshot snapshot_of(const FdmGrid& grid, const SimState& s, Vec2 origin = {}) {
  FieldSnapshot snap;
  snap.t = s.t;
  for (std::size_t id = 0; id < grid.size(); ++id) {
    const Vec2 p = origin + grid.position(id);
    snap.rows.push_back({id, p.x, p.y, s.p[id], s.sw[id]});
  }
  return snap;
}

inline void write_snapshot_csv(std::ostream& os, const FieldSnapshot& snap) {
  os << "t,id,x,y,p,sw\n" << std::setprecision(17);
  for (const FieldRow& r : snap.rows) {
    os << snap.t << ',' << r.id << ',' << r.x << ',' << r.y << ',' << r.p << ',' << r.sw << '\n';
  }
}

inline void write_snapshot_csv(const std::string& path, const FieldSnapshot& snap) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  write_snapshot_csv(os, snap);
  if (!os) throw io_error("write failed for '" + path + "'");
}

inline FieldSnapshot read_snapshot_csv(std::istream& is, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw io_error(source + ": empty snapshot");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,id,x,y,p,sw") throw io_error(source + ": unexpected snapshot header '" + line + "'");
  FieldSnapshot snap;
  std::size_t lineno = 1;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw io_error(source + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      const double t = std::stod(f[0]);
      if (first) snap.t = t;
      first = false;
      snap.rows.push_back({std::stoul(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw io_error(source + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return snap;
}

inline FieldSnapshot read_snapshot_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open snapshot '" + path + "'");
  return read_snapshot_csv(is, path);
}

/// Legacy ASCII VTK point data.
inline void write_snapshot_vtk(std::ostream& os, const FieldSnapshot& snap) {
  const std::size_t n = snap.rows.size();
  os << "# vtk DataFile Version 3.0\nugfdm snapshot t=" << snap.t << "\nASCII\nDATASET POLYDATA\n";
  os << std::setprecision(17) << "POINTS " << n << " double\n";
  for (const FieldRow& r : snap.rows) os << r.x << ' ' << r.y << " 0\n";
  os << "VERTICES " << n << ' ' << 2 * n << '\n';
  for (std::size_t i = 0; i < n; ++i) os << "1 " << i << '\n';
  os << "POINT_DATA " << n << "\nSCALARS p double 1\nLOOKUP_TABLE default\n";
  for (const FieldRow& r : snap.rows) os << r.p << '\n';
  os << "SCALARS sw double 1\nLOOKUP_TABLE default\n";
  for (const FieldRow& r : snap.rows) os << r.sw << '\n';
}

inline std::vector<double> field_p(const FieldSnapshot& s) {
  std::vector<double> v;
  for (const auto& r : s.rows) v.push_back(r.p);
  return v;
}

inline std::vector<double> field_sw(const FieldSnapshot& s) {
  std::vector<double> v;
  for (const auto& r : s.rows) v.push_back(r.sw);
  return v;
}

// ---- profiles ---------------------------------------------------------------

struct ProfilePoint {
  double x = 0.0, p = 0.0, sw = 0.0;
};

inline std::vector<ProfilePoint> extract_profile(const FieldSnapshot& snap, double y, double tol) {
  std::vector<ProfilePoint> out;
  for (const FieldRow& r : snap.rows) {
    if (std::abs(r.y - y) <= tol) out.push_back({r.x, r.p, r.sw});
  }
  if (out.empty()) {
    std::ostringstream msg;
    msg << "empty profile selection: no node within " << tol << " of y = " << y;
    throw config_error(msg.str());
  }
  std::stable_sort(out.begin(), out.end(), [](const ProfilePoint& a, const ProfilePoint& b) { return a.x < b.x; });
  return out;
}

/// First x, scanning left to right, where Sw drops to `level` (linear
/// between samples). NaN if the profile never reaches it.
inline double crossing_position(const std::vector<ProfilePoint>& prof, double level) {
  if (prof.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (prof.front().sw <= level) return prof.front().x;
  for (std::size_t i = 1; i < prof.size(); ++i) {
    const ProfilePoint& a = prof[i - 1];
    const ProfilePoint& b = prof[i];
    if (b.sw <= level) {
      const double f = (a.sw - level) / (a.sw - b.sw);
      return a.x + f * (b.x - a.x);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Distance over which Sw falls from `upper` to `lower`.
inline double front_width(const std::vector<ProfilePoint>& prof, double upper = 0.7, double lower = 0.3) {
  return crossing_position(prof, lower) - crossing_position(prof, upper);
}

// ---- lattice interpolation --------------------------------------------------

struct LatticeField {
  double x0 = 0.0, y0 = 0.0, spacing = 1.0;
  std::size_t nx = 0, ny = 0;  // point counts
  std::vector<double> p, sw;   // row-major, NaN outside the domain

  std::size_t size() const { return nx * ny; }
  Vec2 position(std::size_t i, std::size_t j) const {
    return {x0 + static_cast<double>(i) * spacing, y0 + static_cast<double>(j) * spacing};
  }
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
};

/// Inverse-distance weighting (power 2) over the four nearest nodes, exact at
/// coincident nodes; lattice points outside the polygon are NaN.
inline LatticeField interpolate_to_lattice(const FieldSnapshot& snap, const Polygon& domain, double spacing) {
  if (!(spacing > 0.0)) throw config_error("lattice spacing must be positive");
  LatticeField lat;
  lat.spacing = spacing;
  if (domain.size() < 3) return lat;
  const BoundingBox bb = bounding_box(domain);
  lat.x0 = bb.lo.x;
  lat.y0 = bb.lo.y;
  lat.nx = static_cast<std::size_t>(std::floor((bb.hi.x - bb.lo.x) / spacing + 1e-9)) + 1;
  lat.ny = static_cast<std::size_t>(std::floor((bb.hi.y - bb.lo.y) / spacing + 1e-9)) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  lat.p.assign(lat.size(), nan);
  lat.sw.assign(lat.size(), nan);
  if (snap.rows.empty()) return lat;

  std::vector<Node> pts(snap.rows.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k].id = k;
    pts[k].position = {snap.rows[k].x, snap.rows[k].y};
  }
  const double extent = std::max(bb.hi.x - bb.lo.x, bb.hi.y - bb.lo.y);
  const double cell = std::max(extent / std::sqrt(static_cast<double>(pts.size())), 1e-12);
  const SpatialIndex index(pts, cell);
  const double exact = 1e-12 * std::max(extent, 1.0);
  const double in_tol = 1e-9 * std::max(extent, 1.0);
  const std::size_t k_near = std::min<std::size_t>(4, pts.size());

  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t j = 0; j < lat.ny; ++j) {
    for (std::size_t i = 0; i < lat.nx; ++i) {
      const Vec2 q = lat.position(i, j);
      if (!point_in_closed_polygon(q, domain, in_tol)) continue;
      double radius = cell;
      for (;;) {
        near.clear();
        index.for_each_within(q, radius, [&](NodeId id, double d) { near.emplace_back(d, id); });
        if (near.size() >= k_near || radius > 4.0 * extent) break;
        radius *= 2.0;
      }
      std::sort(near.begin(), near.end());
      const std::size_t m = std::min(k_near, near.size());
      const std::size_t out = lat.index(i, j);
      if (near.front().first <= exact) {
        lat.p[out] = snap.rows[near.front().second].p;
        lat.sw[out] = snap.rows[near.front().second].sw;
        continue;
      }
      double wsum = 0.0, ps = 0.0, ss = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double w = 1.0 / (near[k].first * near[k].first);
        wsum += w;
        ps += w * snap.rows[near[k].second].p;
        ss += w * snap.rows[near[k].second].sw;
      }
      lat.p[out] = ps / wsum;
      lat.sw[out] = ss / wsum;
    }
  }
  return lat;
}

inline void write_lattice_csv(std::ostream& os, const LatticeField& lat) {
  os << "i,j,x,y,p,sw\n" << std::setprecision(17);
  for (std::size_t j = 0; j < lat.ny; ++j) {
    for (std::size_t i = 0; i < lat.nx; ++i) {
      const Vec2 q = lat.position(i, j);
      const std::size_t k = lat.index(i, j);
      os << i << ',' << j << ',' << q.x << ',' << q.y << ',';
      if (std::isnan(lat.p[k])) os << "nan,nan\n";
      else os << lat.p[k] << ',' << lat.sw[k] << '\n';
    }
  }
}

/// Lattice row nearest to y as a profile (missing points skipped).
inline std::vector<ProfilePoint> lattice_profile(const LatticeField& lat, double y) {
  std::vector<ProfilePoint> out;
  if (lat.ny == 0) return out;
  const double jf = std::round((y - lat.y0) / lat.spacing);
  if (jf < 0.0 || jf >= static_cast<double>(lat.ny)) return out;
  const auto j = static_cast<std::size_t>(jf);
  for (std::size_t i = 0; i < lat.nx; ++i) {
    const std::size_t k = lat.index(i, j);
    if (!std::isnan(lat.p[k])) out.push_back({lat.position(i, j).x, lat.p[k], lat.sw[k]});
  }
  return out;
}

// ---- matching fields by coordinates ----------------------------------------

/// Coordinate lookup for a snapshot; keys are positions rounded to `quantum`.
class FieldLookup {
 public:
  explicit FieldLookup(const FieldSnapshot& snap, double quantum = 1e-6) : snap_(&snap), q_(quantum) {
    for (std::size_t k = 0; k < snap.rows.size(); ++k) map_[key(snap.rows[k].x, snap.rows[k].y)] = k;
  }

  const FieldRow* find(double x, double y) const {
    auto it = map_.find(key(x, y));
    return it == map_.end() ? nullptr : &snap_->rows[it->second];
  }

 private:
  std::pair<long long, long long> key(double x, double y) const { return {std::llround(x / q_), std::llround(y / q_)}; }
  const FieldSnapshot* snap_;
  double q_;
  std::map<std::pair<long long, long long>, std::size_t> map_;
};

struct FieldErrors {
  double re_p = 0.0;
  double re_sw = 0.0;
  std::size_t points = 0;
};

/// Relative errors of `u` against `ref` over the points present in both
/// (or only over `points` when given).
inline FieldErrors compare_fields(const FieldSnapshot& u, const FieldSnapshot& ref,
                                  const std::vector<Vec2>* points = nullptr) {
  const FieldLookup lu(u), lr(ref);
  std::vector<double> up, us, rp, rs;
  auto take = [&](double x, double y) {
    const FieldRow* a = lu.find(x, y);
    const FieldRow* b = lr.find(x, y);
    if (!a || !b) return false;
    up.push_back(a->p);
    us.push_back(a->sw);
    rp.push_back(b->p);
    rs.push_back(b->sw);
    return true;
  };
  if (points) {
    for (const Vec2& q : *points) {
      if (!take(q.x, q.y)) throw config_error("comparison point missing from one of the fields");
    }
  } else {
    for (const FieldRow& r : u.rows) take(r.x, r.y);
  }
  if (up.empty()) throw config_error("fields share no node positions");
  return {relative_error(up, rp), relative_error(us, rs), up.size()};
}

/// Extends a reference solved on a y-invariant strip (one grid row is
/// enough) to every (x, y) of a rectangle by copying the column value.
inline FieldSnapshot extend_y_invariant(const FieldSnapshot& strip, double y_extent, double dy) {
  FieldSnapshot out;
  out.t = strip.t;
  const std::size_t ny = grid_divisions(y_extent, dy, "y");
  std::vector<FieldRow> base;
  for (const FieldRow& r : strip.rows) {
    if (std::abs(r.y) <= 1e-9) base.push_back(r);
  }
  std::size_t id = 0;
  for (std::size_t j = 0; j <= ny; ++j) {
    for (const FieldRow& r : base) out.rows.push_back({id++, r.x, static_cast<double>(j) * dy, r.p, r.sw});
  }
  return out;
}

// ---- run --------------------------------------------------------------------

enum class SolverKind { Gfdm, Fdm };

struct RunResult {
  std::vector<FieldSnapshot> snapshots;  // initial, then each output time, then t_end
  SolverReport report;
  std::optional<NodeCloud> cloud;        // GFDM runs only
};

inline RunResult run_gfdm(const ScenarioConfig& cfg) {
  GfdmSetup setup = build_gfdm(cfg);
  Trajectory traj = simulate(setup.problem, setup.initial, cfg.time, cfg.output_times);
  RunResult res;
  for (const SimState& s : traj.snapshots) res.snapshots.push_back(snapshot_of(setup.problem.cloud(), s));
  res.report = std::move(traj.report);
  res.cloud = setup.problem.cloud();
  return res;
}

inline RunResult run_fdm_scenario(const ScenarioConfig& cfg, std::optional<double> step = {}) {
  RunResult res;
  if (cfg.domain_type == "rectangle") {
    FdmSetup setup = step ? build_fdm(cfg, step, step) : build_fdm(cfg);
    Trajectory traj = simulate(setup.problem, setup.initial, cfg.time, cfg.output_times);
    for (const SimState& s : traj.snapshots) res.snapshots.push_back(snapshot_of(setup.problem.grid(), s));
    res.report = std::move(traj.report);
  } else {
    FdmSetup setup = build_fdm_surrogate(cfg, step.value_or(cfg.nominal_spacing()));
    Trajectory traj = simulate(setup.problem, setup.initial, cfg.time, cfg.output_times);
    const Vec2 origin = bounding_box(cfg.polygon()).lo;
    for (const SimState& s : traj.snapshots) res.snapshots.push_back(snapshot_of(setup.problem.grid(), s, origin));
    res.report = std::move(traj.report);
  }
  return res;
}

inline std::string time_tag(double t) {
  std::ostringstream os;
  os << std::setprecision(10) << t;
  return os.str();
}

/// Writes snapshot CSVs (plus VTK and lattice files when enabled) and the
/// step report into `dir`.
inline void write_run_outputs(const ScenarioConfig& cfg, const RunResult& res, const std::string& dir,
                              const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());
  for (std::size_t k = 1; k < res.snapshots.size(); ++k) {
    const FieldSnapshot& snap = res.snapshots[k];
    const std::string stem = dir + "/" + prefix + "_t" + time_tag(snap.t);
    write_snapshot_csv(stem + ".csv", snap);
    if (cfg.vtk) {
      std::ofstream os(stem + ".vtk");
      if (!os) throw io_error("cannot open '" + stem + ".vtk' for writing");
      write_snapshot_vtk(os, snap);
    }
    if (cfg.lattice_spacing > 0.0) {
      std::ofstream os(stem + "_lattice.csv");
      if (!os) throw io_error("cannot open '" + stem + "_lattice.csv' for writing");
      write_lattice_csv(os, interpolate_to_lattice(snap, cfg.polygon(), cfg.lattice_spacing));
    }
  }
  std::ofstream rep(dir + "/" + prefix + "_report.csv");
  if (!rep) throw io_error("cannot open report file in '" + dir + "'");
  write_report_csv(rep, res.report);
}

// ---- convergence study ------------------------------------------------------

struct ConvergenceRow {
  double h = 0.0;
  FieldErrors gfdm;
  FieldErrors fdm;
  long gfdm_newton = 0;
  long fdm_newton = 0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  // slope k is log(RE_k / RE_{k+1}) / log(h_k / h_{k+1})
  std::vector<double> gfdm_slope_p, gfdm_slope_sw, fdm_slope_p, fdm_slope_sw;
};

inline double loglog_slope(double h0, double e0, double h1, double e1) {
  return std::log(e0 / e1) / std::log(h0 / h1);
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceResult& res) {
  os << "h,gfdm_re_p,gfdm_re_sw,fdm_re_p,fdm_re_sw,gfdm_newton,fdm_newton,"
        "gfdm_slope_p,gfdm_slope_sw,fdm_slope_p,fdm_slope_sw\n"
     << std::setprecision(10);
  for (std::size_t k = 0; k < res.rows.size(); ++k) {
    const ConvergenceRow& r = res.rows[k];
    os << r.h << ',' << r.gfdm.re_p << ',' << r.gfdm.re_sw << ',' << r.fdm.re_p << ',' << r.fdm.re_sw << ','
       << r.gfdm_newton << ',' << r.fdm_newton;
    if (k < res.gfdm_slope_p.size()) {
      os << ',' << res.gfdm_slope_p[k] << ',' << res.gfdm_slope_sw[k] << ',' << res.fdm_slope_p[k] << ','
         << res.fdm_slope_sw[k];
    } else {
      os << ",,,,";
    }
    os << '\n';
  }
}

/// High-resolution finite-difference reference at t_end, on the full
/// rectangle. With reference_y_invariant the problem is solved on a strip
/// two cells high and copied across y, which is exact when the boundary data
/// do not depend on y (left/right fixed, top/bottom no-flow).
inline FieldSnapshot reference_solution(const ScenarioConfig& cfg) {
  ScenarioConfig ref = cfg;
  const double h = cfg.reference_spacing;
  ref.time.dt_max = cfg.reference_dt_max;
  ref.time.dt_init = std::min(cfg.time.dt_init, cfg.reference_dt_max);
  ref.output_times.clear();
  if (!cfg.reference_y_invariant) return run_fdm_scenario(ref, h).snapshots.back();
  FdmSides sides = fdm_sides(cfg);
  if (!std::holds_alternative<NoFlow>(sides.top) || !std::holds_alternative<NoFlow>(sides.bottom) ||
      !std::holds_alternative<FixedValues>(sides.left) || !std::holds_alternative<FixedValues>(sides.right)) {
    throw config_error("a y-invariant reference needs fixed left/right sides and no-flow top/bottom sides");
  }
  grid_divisions(cfg.y_extent, h, "y");
  ref.y_extent = 2.0 * h;
  const FieldSnapshot strip = run_fdm_scenario(ref, h).snapshots.back();
  return extend_y_invariant(strip, cfg.y_extent, h);
}

/// Runs both solvers at each spacing and measures their errors against the
/// reference on the coarsest lattice, which every member grid contains.
/// The CSV at `csv_path` (if non-empty) is rewritten after every member, so
/// a failure leaves the completed rows behind. A precomputed reference may
/// be passed in to skip the reference run.
inline ConvergenceResult convergence_study(const ScenarioConfig& base, std::vector<double> spacings,
                                           double radius_factor, const std::string& csv_path = {},
                                           std::function<void(const std::string&)> log = {},
                                           const FieldSnapshot* precomputed = nullptr) {
  if (spacings.empty()) throw config_error("convergence study needs at least one spacing");
  for (std::size_t k = 0; k < spacings.size(); ++k) {
    if (!(spacings[k] > 0.0)) throw config_error("convergence spacings must be positive");
    if (k > 0 && !(spacings[k] < spacings[k - 1])) throw config_error("convergence spacings must be descending");
  }
  if (!(radius_factor > 1.0)) throw config_error("convergence radius factor must exceed 1");
  if (base.domain_type != "rectangle") throw config_error("convergence study needs a rectangular domain");
  validate(base);
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  FieldSnapshot computed;
  if (!precomputed) {
    say("reference run at spacing " + time_tag(base.reference_spacing));
    computed = reference_solution(base);
  }
  const FieldSnapshot& reference = precomputed ? *precomputed : computed;

  std::vector<Vec2> common;
  {
    const double H = spacings.front();
    const std::size_t nx = grid_divisions(base.x_extent, H, "x");
    const std::size_t ny = grid_divisions(base.y_extent, H, "y");
    for (std::size_t j = 0; j <= ny; ++j)
      for (std::size_t i = 0; i <= nx; ++i) common.push_back({static_cast<double>(i) * H, static_cast<double>(j) * H});
  }

  ConvergenceResult res;
  auto flush = [&] {
    if (csv_path.empty()) return;
    std::ofstream os(csv_path);
    if (!os) throw io_error("cannot open '" + csv_path + "' for writing");
    write_convergence_csv(os, res);
  };
  for (double h : spacings) {
    ScenarioConfig cfg = base;
    cfg.cloud_type = "cartesian";
    cfg.dx = cfg.dy = cfg.spacing = h;
    cfg.radius = radius_factor * h;
    cfg.radius_multiple.reset();
    cfg.virtual_offset.reset();
    cfg.output_times.clear();
    ConvergenceRow row;
    row.h = h;
    try {
      say("gfdm run at spacing " + time_tag(h));
      const RunResult g = run_gfdm(cfg);
      say("fdm run at spacing " + time_tag(h));
      const RunResult f = run_fdm_scenario(cfg);
      row.gfdm = compare_fields(g.snapshots.back(), reference, &common);
      row.fdm = compare_fields(f.snapshots.back(), reference, &common);
      row.gfdm_newton = g.report.cumulative_newton;
      row.fdm_newton = f.report.cumulative_newton;
    } catch (...) {
      flush();
      throw;
    }
    res.rows.push_back(row);
    flush();
  }
  for (std::size_t k = 0; k + 1 < res.rows.size(); ++k) {
    const ConvergenceRow& a = res.rows[k];
    const ConvergenceRow& b = res.rows[k + 1];
    res.gfdm_slope_p.push_back(loglog_slope(a.h, a.gfdm.re_p, b.h, b.gfdm.re_p));
    res.gfdm_slope_sw.push_back(loglog_slope(a.h, a.gfdm.re_sw, b.h, b.gfdm.re_sw));
    res.fdm_slope_p.push_back(loglog_slope(a.h, a.fdm.re_p, b.h, b.fdm.re_p));
    res.fdm_slope_sw.push_back(loglog_slope(a.h, a.fdm.re_sw, b.h, b.fdm.re_sw));
  }
  flush();
  return res;
}

// ---- diagnose ---------------------------------------------------------------

struct DiagnoseRow {
  NodeId id = 0;
  double x = 0.0, y = 0.0;
  NodeKind kind = NodeKind::Interior;
  StencilQuality quality;
  bool degenerate = false;
};

/// Selector grammar: "all" (every non-virtual node), "interior", "boundary",
/// or a comma list of ids and inclusive ranges such as "3,7-9".
inline std::vector<NodeId> select_nodes(const NodeCloud& cloud, const std::string& selector) {
  std::vector<NodeId> out;
  const std::string sel = detail::trim(selector);
  if (sel == "all" || sel == "interior" || sel == "boundary") {
    for (const Node& n : cloud.nodes) {
      if (n.kind == NodeKind::Virtual) continue;
      const bool interior = n.kind == NodeKind::Interior;
      if (sel == "all" || (sel == "interior") == interior) out.push_back(n.id);
    }
  } else {
    for (const std::string& tok : detail::split(sel, ',')) {
      const auto dash = tok.find('-', 1);
      try {
        std::size_t pos = 0;
        const unsigned long a = std::stoul(tok.substr(0, dash), &pos);
        unsigned long b = a;
        if (dash != std::string::npos) b = std::stoul(tok.substr(dash + 1));
        for (unsigned long id = a; id <= b; ++id) {
          if (id < cloud.size() && cloud.nodes[id].kind != NodeKind::Virtual) out.push_back(id);
        }
      } catch (const std::logic_error&) {
        throw config_error("malformed node selector '" + tok + "'");
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw config_error("node selector '" + selector + "' matches no node");
  return out;
}

inline std::vector<DiagnoseRow> diagnose(const NodeCloud& cloud, double radius, const std::string& selector) {
  const auto ids = select_nodes(cloud, selector);
  const StencilFinder finder(cloud, radius);
  std::vector<DiagnoseRow> rows;
  for (NodeId id : ids) {
    DiagnoseRow row;
    row.id = id;
    row.x = cloud.nodes[id].position.x;
    row.y = cloud.nodes[id].position.y;
    row.kind = cloud.nodes[id].kind;
    Stencil st = finder.find(id);
    try {
      row.quality = stencil_quality(build_node_operators(st));
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Config) throw;
      NodeOperators empty;
      empty.stencil = st;
      for (auto& r : empty.rows) r.assign(st.size(), std::numeric_limits<double>::quiet_NaN());
      row.quality = stencil_quality(empty);
      row.degenerate = true;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<DiagnoseRow> diagnose(const ScenarioConfig& cfg, const std::string& selector) {
  validate(cfg);
  return diagnose(build_cloud(cfg), cfg.influence_radius(), selector);
}

inline void write_diagnose_csv(std::ostream& os, const std::vector<DiagnoseRow>& rows) {
  static const char* names[5] = {"dx", "dy", "dxx", "dyy", "dxy"};
  os << "id,x,y,kind,neighbors,centroid_offset";
  for (const char* n : names) os << ",column_" << n;
  for (const char* n : names) os << ",halfplane_" << n;
  os << ",rcond,degenerate\n" << std::setprecision(12);
  for (const DiagnoseRow& r : rows) {
    os << r.id << ',' << r.x << ',' << r.y << ',' << to_string(r.kind) << ',' << r.quality.neighbor_count << ','
       << r.quality.centroid_offset;
    for (double v : r.quality.column_imbalance) os << ',' << v;
    for (double v : r.quality.half_plane_imbalance) os << ',' << v;
    os << ',' << r.quality.rcond << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
}

// ---- compare ----------------------------------------------------------------

struct ProfileDiff {
  double x = 0.0;
  double p_a = 0.0, p_b = 0.0, sw_a = 0.0, sw_b = 0.0;
};

struct Comparison {
  FieldErrors errors;                 // a measured against b
  std::vector<ProfileDiff> profile;   // shared points on the profile line
};

inline Comparison compare(const FieldSnapshot& a, const FieldSnapshot& b, std::optional<double> profile_y = {},
                          double tol = 1e-6) {
  Comparison c;
  c.errors = compare_fields(a, b);
  if (profile_y) {
    const FieldLookup lb(b);
    extract_profile(a, *profile_y, tol);  // rejects an empty selection
    for (const FieldRow& r : a.rows) {
      if (std::abs(r.y - *profile_y) > tol) continue;
      if (const FieldRow* rb = lb.find(r.x, r.y)) c.profile.push_back({r.x, r.p, rb->p, r.sw, rb->sw});
    }
    std::stable_sort(c.profile.begin(), c.profile.end(),
                     [](const ProfileDiff& u, const ProfileDiff& v) { return u.x < v.x; });
  }
  return c;
}

inline void write_comparison(std::ostream& os, const Comparison& c) {
  os << std::setprecision(10) << "re_p," << c.errors.re_p << "\nre_sw," << c.errors.re_sw << "\npoints,"
     << c.errors.points << '\n';
  if (!c.profile.empty()) {
    os << "\nx,p_a,p_b,dp,sw_a,sw_b,dsw\n";
    for (const ProfileDiff& d : c.profile) {
      os << d.x << ',' << d.p_a << ',' << d.p_b << ',' << d.p_a - d.p_b << ',' << d.sw_a << ',' << d.sw_b << ','
         << d.sw_a - d.sw_b << '\n';
    }
  }
}

}  // namespace ugfdm
