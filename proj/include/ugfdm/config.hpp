#pragma once

// Scenario configuration: a flat sectioned text format,
//
//   [section]
//   key = value      # comment
//
// with one [boundary.<name>] section per boundary group.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ugfdm/cloud.hpp"
#include "ugfdm/error.hpp"
#include "ugfdm/geometry.hpp"
#include "ugfdm/solver.hpp"

namespace ugfdm {

struct BoundaryGroup {
  std::string name;
  std::vector<std::string> segments;  // edge names or indices
  BoundaryKind kind = BoundaryKind::Dirichlet;
  // dirichlet: {value}; robin: {a, b, g}
  std::vector<double> p;
  std::vector<double> sw;
  friend bool operator==(const BoundaryGroup&, const BoundaryGroup&) = default;
};

struct ScenarioConfig {
  // [domain]
  std::string domain_type = "rectangle";  // rectangle | polygon
  double x_extent = 200.0;
  double y_extent = 80.0;
  std::vector<Vec2> vertices;             // polygon, counter-clockwise
  std::vector<std::string> edge_names;    // optional, one per polygon edge

  // [cloud]
  std::string cloud_type = "cartesian";   // cartesian | irregular | csv
  double dx = 4.0;
  double dy = 4.0;
  double spacing = 4.0;
  std::uint64_t seed = 0;
  double jitter = 0.3;
  std::string cloud_file;
  std::optional<double> virtual_offset;

  // [stencil]
  std::optional<double> radius;           // absolute, metres
  std::optional<double> radius_multiple;  // times sqrt(dx^2 + dy^2)

  // [model]
  double permeability = 100.0;
  double porosity = 0.3;
  double compressibility = 0.0;
  double p_ref = 10.0;
  double mu_o = 10.0;
  double mu_w = 2.0;
  double swc = 0.2;
  double sor = 0.2;
  double q_o = 0.0;
  double q_w = 0.0;
  double alpha = 0.0864;

  // [initial]
  double p_init = 10.0;
  double sw_init = 0.2;

  std::vector<BoundaryGroup> boundaries;

  TimeControl time;

  // [output]
  std::string output_dir = "output";
  std::vector<double> output_times;
  bool vtk = false;
  double lattice_spacing = 0.0;           // 0 disables lattice interpolation output
  std::optional<double> profile_y;

  // [reference]
  double reference_spacing = 0.5;
  double reference_dt_max = 0.02;
  bool reference_y_invariant = true;

  // [convergence]
  std::vector<double> convergence_spacings;
  double convergence_radius_factor = 1.5;

  friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
    auto tc = [](const TimeControl& t) {
      return std::tie(t.dt_init, t.dt_max, t.t_end, t.newton_tol, t.max_newton, t.dt_grow, t.dt_cut, t.max_cuts);
    };
    auto vx = [](const std::vector<Vec2>& v) {
      std::vector<std::pair<double, double>> out;
      for (auto p : v) out.emplace_back(p.x, p.y);
      return out;
    };
    return a.domain_type == b.domain_type && a.x_extent == b.x_extent && a.y_extent == b.y_extent &&
           vx(a.vertices) == vx(b.vertices) && a.edge_names == b.edge_names && a.cloud_type == b.cloud_type &&
           a.dx == b.dx && a.dy == b.dy && a.spacing == b.spacing && a.seed == b.seed && a.jitter == b.jitter &&
           a.cloud_file == b.cloud_file && a.virtual_offset == b.virtual_offset && a.radius == b.radius &&
           a.radius_multiple == b.radius_multiple && a.permeability == b.permeability && a.porosity == b.porosity &&
           a.compressibility == b.compressibility && a.p_ref == b.p_ref && a.mu_o == b.mu_o && a.mu_w == b.mu_w &&
           a.swc == b.swc && a.sor == b.sor && a.q_o == b.q_o && a.q_w == b.q_w && a.alpha == b.alpha &&
           a.p_init == b.p_init && a.sw_init == b.sw_init && a.boundaries == b.boundaries &&
           tc(a.time) == tc(b.time) && a.output_dir == b.output_dir && a.output_times == b.output_times &&
           a.vtk == b.vtk && a.lattice_spacing == b.lattice_spacing && a.profile_y == b.profile_y &&
           a.reference_spacing == b.reference_spacing && a.reference_dt_max == b.reference_dt_max &&
           a.reference_y_invariant == b.reference_y_invariant &&
           a.convergence_spacings == b.convergence_spacings &&
           a.convergence_radius_factor == b.convergence_radius_factor;
  }

  Polygon polygon() const { return domain_type == "rectangle" ? rectangle_polygon(x_extent, y_extent) : vertices; }

  /// Lattice step used for radius multiples and the default virtual offset.
  double nominal_spacing() const { return cloud_type == "cartesian" ? std::min(dx, dy) : spacing; }
  double nominal_diagonal() const {
    return cloud_type == "cartesian" ? std::hypot(dx, dy) : std::sqrt(2.0) * spacing;
  }
  double influence_radius() const {
    if (radius) return *radius;
    return radius_multiple.value_or(1.001) * nominal_diagonal();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string join_doubles(const std::vector<double>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += fmt_double(v[i]);
  }
  return s;
}

inline const std::vector<std::string>& rectangle_edge_names() {
  static const std::vector<std::string> names{"bottom", "right", "top", "left"};
  return names;
}

}  // namespace detail

/// Resolves a segment token (edge name or index) to a polygon edge index.
inline std::optional<int> resolve_segment(const ScenarioConfig& cfg, const std::string& token) {
  const auto& names = cfg.domain_type == "rectangle" ? detail::rectangle_edge_names() : cfg.edge_names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == token) return static_cast<int>(i);
  }
  const std::size_t n_edges = cfg.domain_type == "rectangle" ? 4 : cfg.vertices.size();
  try {
    std::size_t pos = 0;
    const long idx = std::stol(token, &pos);
    if (pos == token.size() && idx >= 0 && static_cast<std::size_t>(idx) < n_edges) return static_cast<int>(idx);
  } catch (const std::logic_error&) {
  }
  return std::nullopt;
}

/// Throws a config error listing every problem found.
inline void validate(const ScenarioConfig& cfg) {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  need(cfg.domain_type == "rectangle" || cfg.domain_type == "polygon", "domain.type must be rectangle or polygon");
  if (cfg.domain_type == "rectangle") {
    need(cfg.x_extent > 0.0 && cfg.y_extent > 0.0, "domain extents must be positive");
  } else if (cfg.domain_type == "polygon") {
    need(cfg.vertices.size() >= 3, "domain.vertices needs at least three points");
    need(cfg.edge_names.empty() || cfg.edge_names.size() == cfg.vertices.size(),
         "domain.edges must name every polygon edge");
  }
  need(cfg.cloud_type == "cartesian" || cfg.cloud_type == "irregular" || cfg.cloud_type == "csv",
       "cloud.type must be cartesian, irregular or csv");
  if (cfg.cloud_type == "cartesian") {
    need(cfg.domain_type == "rectangle", "cartesian clouds need a rectangle domain");
    need(cfg.dx > 0.0 && cfg.dy > 0.0, "cloud.dx and cloud.dy must be positive");
  }
  if (cfg.cloud_type == "irregular") {
    need(cfg.spacing > 0.0, "cloud.spacing must be positive");
    need(cfg.jitter >= 0.0 && cfg.jitter <= 0.5, "cloud.jitter must lie in [0, 0.5]");
  }
  if (cfg.cloud_type == "csv") need(!cfg.cloud_file.empty(), "cloud.file is required for csv clouds");
  if (cfg.virtual_offset) need(*cfg.virtual_offset > 0.0, "cloud.virtual_offset must be positive");
  need(!(cfg.radius && cfg.radius_multiple), "give either stencil.radius or stencil.radius_multiple, not both");
  if (cfg.radius) need(*cfg.radius > 0.0, "stencil.radius must be positive");
  if (cfg.radius_multiple) {
    need(*cfg.radius_multiple > 1.0, "stencil.radius_multiple must exceed 1 (stencil underdetermined risk)");
  }
  need(cfg.swc >= 0.0 && cfg.sor >= 0.0, "model.swc and model.sor must be non-negative");
  need(cfg.swc + cfg.sor < 1.0, "model.swc + model.sor must be below 1");
  need(cfg.permeability > 0.0, "model.permeability must be positive");
  need(cfg.porosity > 0.0 && cfg.porosity < 1.0, "model.porosity must lie in (0, 1)");
  need(cfg.mu_o > 0.0 && cfg.mu_w > 0.0, "model viscosities must be positive");
  need(cfg.sw_init >= 0.0 && cfg.sw_init <= 1.0, "initial.sw must lie in [0, 1]");
  try {
    cfg.time.validate();
  } catch (const Error& e) {
    problems.emplace_back(e.what());
  }
  for (double t : cfg.output_times) need(t >= 0.0, "output.times must be non-negative");
  need(cfg.lattice_spacing >= 0.0, "output.lattice_spacing must be non-negative");
  need(cfg.reference_spacing > 0.0 && cfg.reference_dt_max > 0.0, "reference spacing and dt_max must be positive");
  for (double h : cfg.convergence_spacings) need(h > 0.0, "convergence.spacings must be positive");
  need(cfg.convergence_radius_factor > 1.0, "convergence.radius_factor must exceed 1");

  if (cfg.cloud_type != "csv") {
    const std::size_t n_edges = cfg.domain_type == "rectangle" ? 4 : cfg.vertices.size();
    std::vector<int> owner(n_edges, -1);
    for (std::size_t g = 0; g < cfg.boundaries.size(); ++g) {
      const BoundaryGroup& b = cfg.boundaries[g];
      const std::size_t want = b.kind == BoundaryKind::Dirichlet ? 1 : 3;
      need(b.p.size() == want && b.sw.size() == want,
           "boundary." + b.name + ": p and sw need " + std::to_string(want) + " value(s) for this kind");
      if (b.kind == BoundaryKind::Robin && b.p.size() == 3 && b.sw.size() == 3) {
        need(!(b.p[0] == 0.0 && b.p[1] == 0.0) && !(b.sw[0] == 0.0 && b.sw[1] == 0.0),
             "boundary." + b.name + ": robin coefficients a and b cannot both be zero");
      }
      need(!b.segments.empty(), "boundary." + b.name + ": no segments listed");
      for (const std::string& s : b.segments) {
        const auto idx = resolve_segment(cfg, s);
        if (!idx) {
          problems.push_back("boundary." + b.name + ": unknown segment '" + s + "'");
          continue;
        }
        if (owner[static_cast<std::size_t>(*idx)] >= 0) {
          problems.push_back("boundary segment '" + s + "' assigned twice");
        }
        owner[static_cast<std::size_t>(*idx)] = static_cast<int>(g);
      }
    }
    for (std::size_t e = 0; e < n_edges; ++e) {
      if (owner[e] < 0) problems.push_back("boundary segment " + std::to_string(e) + " has no boundary group");
    }
  }

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw config_error(msg);
  }
}

inline ScenarioConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  ScenarioConfig cfg;
  std::vector<std::string> problems;
  std::string section;
  BoundaryGroup* group = nullptr;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen_times;

  auto number = [&](const std::string& key, const std::string& v) -> double {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::logic_error&) {
      problems.push_back(source + ":" + std::to_string(lineno) + ": '" + key + "' expects a number, got '" + v + "'");
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  auto numbers = [&](const std::string& key, const std::string& v, char sep) {
    std::vector<double> out;
    for (const auto& tok : detail::split(v, sep)) out.push_back(number(key, tok));
    return out;
  };
  auto boolean = [&](const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    problems.push_back(source + ":" + std::to_string(lineno) + ": '" + key + "' expects true/false");
    return false;
  };

  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(source + ":" + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      group = nullptr;
      if (section.rfind("boundary.", 0) == 0) {
        cfg.boundaries.push_back({});
        group = &cfg.boundaries.back();
        group->name = section.substr(9);
      } else if (section != "domain" && section != "cloud" && section != "stencil" && section != "model" &&
                 section != "initial" && section != "time" && section != "output" && section != "reference" &&
                 section != "convergence") {
        problems.push_back(source + ":" + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(source + ":" + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    bool known = true;
    if (group) {
      if (key == "segments") group->segments = detail::split(val, ',');
      else if (key == "kind") {
        if (val == "dirichlet") group->kind = BoundaryKind::Dirichlet;
        else if (val == "robin") group->kind = BoundaryKind::Robin;
        else problems.push_back(source + ":" + std::to_string(lineno) + ": boundary kind must be dirichlet or robin");
      } else if (key == "p") group->p = numbers(full, val, ' ');
      else if (key == "sw") group->sw = numbers(full, val, ' ');
      else known = false;
    } else if (section == "domain") {
      if (key == "type") cfg.domain_type = val;
      else if (key == "x_extent") cfg.x_extent = number(full, val);
      else if (key == "y_extent") cfg.y_extent = number(full, val);
      else if (key == "vertices") {
        cfg.vertices.clear();
        for (const auto& pt : detail::split(val, ';')) {
          const auto xy = numbers(full, pt, ' ');
          if (xy.size() != 2) problems.push_back(source + ":" + std::to_string(lineno) + ": vertex needs x and y");
          else cfg.vertices.push_back({xy[0], xy[1]});
        }
      } else if (key == "edges") cfg.edge_names = detail::split(val, ',');
      else known = false;
    } else if (section == "cloud") {
      if (key == "type") cfg.cloud_type = val;
      else if (key == "dx") cfg.dx = number(full, val);
      else if (key == "dy") cfg.dy = number(full, val);
      else if (key == "spacing") cfg.spacing = number(full, val);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(number(full, val));
      else if (key == "jitter") cfg.jitter = number(full, val);
      else if (key == "file") cfg.cloud_file = val;
      else if (key == "virtual_offset") cfg.virtual_offset = number(full, val);
      else known = false;
    } else if (section == "stencil") {
      if (key == "radius") cfg.radius = number(full, val);
      else if (key == "radius_multiple") cfg.radius_multiple = number(full, val);
      else known = false;
    } else if (section == "model") {
      if (key == "permeability") cfg.permeability = number(full, val);
      else if (key == "porosity") cfg.porosity = number(full, val);
      else if (key == "compressibility") cfg.compressibility = number(full, val);
      else if (key == "p_ref") cfg.p_ref = number(full, val);
      else if (key == "mu_o") cfg.mu_o = number(full, val);
      else if (key == "mu_w") cfg.mu_w = number(full, val);
      else if (key == "swc") cfg.swc = number(full, val);
      else if (key == "sor") cfg.sor = number(full, val);
      else if (key == "q_o") cfg.q_o = number(full, val);
      else if (key == "q_w") cfg.q_w = number(full, val);
      else if (key == "alpha") cfg.alpha = number(full, val);
      else known = false;
    } else if (section == "initial") {
      if (key == "p") cfg.p_init = number(full, val);
      else if (key == "sw") cfg.sw_init = number(full, val);
      else known = false;
    } else if (section == "time") {
      if (key == "dt_init") cfg.time.dt_init = number(full, val);
      else if (key == "dt_max") cfg.time.dt_max = number(full, val);
      else if (key == "t_end") cfg.time.t_end = number(full, val);
      else if (key == "newton_tol") cfg.time.newton_tol = number(full, val);
      else if (key == "max_newton") cfg.time.max_newton = static_cast<int>(number(full, val));
      else if (key == "dt_grow") cfg.time.dt_grow = number(full, val);
      else if (key == "dt_cut") cfg.time.dt_cut = number(full, val);
      else if (key == "max_cuts") cfg.time.max_cuts = static_cast<int>(number(full, val));
      else known = false;
    } else if (section == "output") {
      if (key == "dir") cfg.output_dir = val;
      else if (key == "times") cfg.output_times = numbers(full, val, ',');
      else if (key == "vtk") cfg.vtk = boolean(full, val);
      else if (key == "lattice_spacing") cfg.lattice_spacing = number(full, val);
      else if (key == "profile_y") cfg.profile_y = number(full, val);
      else known = false;
    } else if (section == "reference") {
      if (key == "spacing") cfg.reference_spacing = number(full, val);
      else if (key == "dt_max") cfg.reference_dt_max = number(full, val);
      else if (key == "y_invariant") cfg.reference_y_invariant = boolean(full, val);
      else known = false;
    } else if (section == "convergence") {
      if (key == "spacings") cfg.convergence_spacings = numbers(full, val, ',');
      else if (key == "radius_factor") cfg.convergence_radius_factor = number(full, val);
      else known = false;
    } else {
      known = false;
    }
    if (!known) problems.push_back(source + ":" + std::to_string(lineno) + ": unknown key '" + full + "'");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw config_error(msg);
  }
  return cfg;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config '" + path + "'");
  ScenarioConfig cfg = parse_config(is, path);
  // a relative cloud file is taken relative to the config's directory
  if (!cfg.cloud_file.empty() && std::filesystem::path(cfg.cloud_file).is_relative()) {
    cfg.cloud_file = (std::filesystem::path(path).parent_path() / cfg.cloud_file).string();
  }
  return cfg;
}

inline std::string serialize_config(const ScenarioConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "[domain]\ntype = " << c.domain_type << '\n';
  if (c.domain_type == "rectangle") {
    os << "x_extent = " << fmt_double(c.x_extent) << "\ny_extent = " << fmt_double(c.y_extent) << '\n';
  } else {
    os << "vertices = ";
    for (std::size_t i = 0; i < c.vertices.size(); ++i) {
      os << (i ? "; " : "") << fmt_double(c.vertices[i].x) << ' ' << fmt_double(c.vertices[i].y);
    }
    os << '\n';
    if (!c.edge_names.empty()) {
      os << "edges = ";
      for (std::size_t i = 0; i < c.edge_names.size(); ++i) os << (i ? ", " : "") << c.edge_names[i];
      os << '\n';
    }
  }
  os << "\n[cloud]\ntype = " << c.cloud_type << "\ndx = " << fmt_double(c.dx) << "\ndy = " << fmt_double(c.dy)
     << "\nspacing = " << fmt_double(c.spacing) << "\nseed = " << c.seed << "\njitter = " << fmt_double(c.jitter)
     << '\n';
  if (!c.cloud_file.empty()) os << "file = " << c.cloud_file << '\n';
  if (c.virtual_offset) os << "virtual_offset = " << fmt_double(*c.virtual_offset) << '\n';
  os << "\n[stencil]\n";
  if (c.radius) os << "radius = " << fmt_double(*c.radius) << '\n';
  if (c.radius_multiple) os << "radius_multiple = " << fmt_double(*c.radius_multiple) << '\n';
  os << "\n[model]\npermeability = " << fmt_double(c.permeability) << "\nporosity = " << fmt_double(c.porosity)
     << "\ncompressibility = " << fmt_double(c.compressibility) << "\np_ref = " << fmt_double(c.p_ref)
     << "\nmu_o = " << fmt_double(c.mu_o) << "\nmu_w = " << fmt_double(c.mu_w) << "\nswc = " << fmt_double(c.swc)
     << "\nsor = " << fmt_double(c.sor) << "\nq_o = " << fmt_double(c.q_o) << "\nq_w = " << fmt_double(c.q_w)
     << "\nalpha = " << fmt_double(c.alpha) << '\n';
  os << "\n[initial]\np = " << fmt_double(c.p_init) << "\nsw = " << fmt_double(c.sw_init) << '\n';
  for (const BoundaryGroup& b : c.boundaries) {
    os << "\n[boundary." << b.name << "]\nsegments = ";
    for (std::size_t i = 0; i < b.segments.size(); ++i) os << (i ? ", " : "") << b.segments[i];
    os << "\nkind = " << (b.kind == BoundaryKind::Dirichlet ? "dirichlet" : "robin") << "\np = "
       << detail::join_doubles(b.p, " ") << "\nsw = " << detail::join_doubles(b.sw, " ") << '\n';
  }
  const TimeControl& t = c.time;
  os << "\n[time]\ndt_init = " << fmt_double(t.dt_init) << "\ndt_max = " << fmt_double(t.dt_max)
     << "\nt_end = " << fmt_double(t.t_end) << "\nnewton_tol = " << fmt_double(t.newton_tol)
     << "\nmax_newton = " << t.max_newton << "\ndt_grow = " << fmt_double(t.dt_grow)
     << "\ndt_cut = " << fmt_double(t.dt_cut) << "\nmax_cuts = " << t.max_cuts << '\n';
  os << "\n[output]\ndir = " << c.output_dir << '\n';
  if (!c.output_times.empty()) os << "times = " << detail::join_doubles(c.output_times, ", ") << '\n';
  os << "vtk = " << (c.vtk ? "true" : "false") << "\nlattice_spacing = " << fmt_double(c.lattice_spacing) << '\n';
  if (c.profile_y) os << "profile_y = " << fmt_double(*c.profile_y) << '\n';
  os << "\n[reference]\nspacing = " << fmt_double(c.reference_spacing)
     << "\ndt_max = " << fmt_double(c.reference_dt_max)
     << "\ny_invariant = " << (c.reference_y_invariant ? "true" : "false") << '\n';
  os << "\n[convergence]\n";
  if (!c.convergence_spacings.empty()) {
    os << "spacings = " << detail::join_doubles(c.convergence_spacings, ", ") << '\n';
  }
  os << "radius_factor = " << fmt_double(c.convergence_radius_factor) << '\n';
  return os.str();
}

}  // namespace ugfdm
