#pragma once

// Node clouds: generation for rectangles and polygons, virtual nodes outside
// derivative boundaries, radius neighbour search and CSV exchange.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ugfdm/error.hpp"
#include "ugfdm/geometry.hpp"

namespace ugfdm {

using NodeId = std::size_t;

enum class NodeKind { Interior, Dirichlet, Robin, Virtual };
enum class BoundaryKind { Dirichlet, Robin };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Interior: return "interior";
    case NodeKind::Dirichlet: return "dirichlet";
    case NodeKind::Robin: return "robin";
    case NodeKind::Virtual: return "virtual";
  }
  return "?";
}

inline NodeKind parse_node_kind(const std::string& s) {
  if (s == "interior") return NodeKind::Interior;
  if (s == "dirichlet") return NodeKind::Dirichlet;
  if (s == "robin") return NodeKind::Robin;
  if (s == "virtual") return NodeKind::Virtual;
  throw config_error("unknown node kind '" + s + "'");
}

struct Node {
  NodeId id = 0;
  Vec2 position;
  NodeKind kind = NodeKind::Interior;
  std::optional<Vec2> normal;  // outward unit normal, Robin nodes only
  std::optional<NodeId> host;  // spawning Robin node, Virtual nodes only
  int segment = -1;            // boundary segment (polygon edge) tag, -1 for interior
};

struct NodeCloud {
  std::vector<Node> nodes;
  std::size_t n_interior = 0;
  std::size_t n_dirichlet = 0;
  std::size_t n_robin = 0;
  std::size_t n_virtual = 0;
  double spacing = 0.0;            // characteristic spacing h
  std::optional<Polygon> domain;   // counter-clockwise boundary, when known

  std::size_t size() const { return nodes.size(); }
  const Node& operator[](NodeId i) const { return nodes[i]; }
  Vec2 position(NodeId i) const { return nodes[i].position; }
};

inline void recount(NodeCloud& cloud) {
  cloud.n_interior = cloud.n_dirichlet = cloud.n_robin = cloud.n_virtual = 0;
  for (const Node& n : cloud.nodes) {
    switch (n.kind) {
      case NodeKind::Interior: ++cloud.n_interior; break;
      case NodeKind::Dirichlet: ++cloud.n_dirichlet; break;
      case NodeKind::Robin: ++cloud.n_robin; break;
      case NodeKind::Virtual: ++cloud.n_virtual; break;
    }
  }
}

// Uniform bucket grid over the node positions. Read-only after construction.
class SpatialIndex {
 public:
  SpatialIndex(const std::vector<Node>& nodes, double cell) : nodes_(&nodes), cell_(cell) {
    if (nodes.empty()) return;
    lo_ = hi_ = nodes.front().position;
    for (const Node& n : nodes) {
      lo_.x = std::min(lo_.x, n.position.x);
      lo_.y = std::min(lo_.y, n.position.y);
      hi_.x = std::max(hi_.x, n.position.x);
      hi_.y = std::max(hi_.y, n.position.y);
    }
    nx_ = static_cast<std::int64_t>(std::floor((hi_.x - lo_.x) / cell_)) + 1;
    ny_ = static_cast<std::int64_t>(std::floor((hi_.y - lo_.y) / cell_)) + 1;
    // Keep the table bounded for very fine cells relative to the extent.
    while (nx_ * ny_ > 4 * static_cast<std::int64_t>(nodes.size()) + 1024) {
      cell_ *= 2.0;
      nx_ = static_cast<std::int64_t>(std::floor((hi_.x - lo_.x) / cell_)) + 1;
      ny_ = static_cast<std::int64_t>(std::floor((hi_.y - lo_.y) / cell_)) + 1;
    }
    start_.assign(static_cast<std::size_t>(nx_ * ny_ + 1), 0);
    for (const Node& n : nodes) ++start_[bucket(n.position) + 1];
    for (std::size_t b = 1; b < start_.size(); ++b) start_[b] += start_[b - 1];
    items_.resize(nodes.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (const Node& n : nodes) items_[fill[bucket(n.position)]++] = n.id;
  }

  // Calls f(id, distance) for every node with distance <= radius of p.
  template <class F>
  void for_each_within(Vec2 p, double radius, F&& f) const {
    if (items_.empty()) return;
    const auto ix0 = clamp_x(static_cast<std::int64_t>(std::floor((p.x - radius - lo_.x) / cell_)));
    const auto ix1 = clamp_x(static_cast<std::int64_t>(std::floor((p.x + radius - lo_.x) / cell_)));
    const auto iy0 = clamp_y(static_cast<std::int64_t>(std::floor((p.y - radius - lo_.y) / cell_)));
    const auto iy1 = clamp_y(static_cast<std::int64_t>(std::floor((p.y + radius - lo_.y) / cell_)));
    for (auto iy = iy0; iy <= iy1; ++iy) {
      for (auto ix = ix0; ix <= ix1; ++ix) {
        const auto b = static_cast<std::size_t>(iy * nx_ + ix);
        for (std::size_t k = start_[b]; k < start_[b + 1]; ++k) {
          const NodeId id = items_[k];
          const double d = distance((*nodes_)[id].position, p);
          if (d <= radius) f(id, d);
        }
      }
    }
  }

 private:
  std::size_t bucket(Vec2 p) const {
    const auto ix = clamp_x(static_cast<std::int64_t>(std::floor((p.x - lo_.x) / cell_)));
    const auto iy = clamp_y(static_cast<std::int64_t>(std::floor((p.y - lo_.y) / cell_)));
    return static_cast<std::size_t>(iy * nx_ + ix);
  }
  std::int64_t clamp_x(std::int64_t i) const { return std::clamp<std::int64_t>(i, 0, nx_ - 1); }
  std::int64_t clamp_y(std::int64_t i) const { return std::clamp<std::int64_t>(i, 0, ny_ - 1); }

  const std::vector<Node>* nodes_;
  double cell_;
  Vec2 lo_, hi_;
  std::int64_t nx_ = 0, ny_ = 0;
  std::vector<std::size_t> start_;
  std::vector<NodeId> items_;
};

// Checks the per-node and pairwise invariants of a cloud.
inline void validate_cloud(const NodeCloud& cloud) {
  for (std::size_t i = 0; i < cloud.nodes.size(); ++i) {
    const Node& n = cloud.nodes[i];
    const std::string tag = "node " + std::to_string(i);
    if (n.id != i) throw config_error(tag + ": id does not match its index");
    if (n.kind == NodeKind::Robin) {
      if (!n.normal) throw config_error(tag + ": robin node without normal");
      if (std::abs(norm(*n.normal) - 1.0) > 1e-12) throw config_error(tag + ": normal is not unit length");
    } else if (n.normal) {
      throw config_error(tag + ": normal on a non-robin node");
    }
    if (n.kind == NodeKind::Virtual) {
      if (!n.host || *n.host >= cloud.nodes.size()) throw config_error(tag + ": virtual node without valid host");
      if (cloud.nodes[*n.host].kind != NodeKind::Robin) throw config_error(tag + ": virtual host is not a robin node");
    } else if (n.host) {
      throw config_error(tag + ": host link on a non-virtual node");
    }
  }
  const double tol = 1e-9 * (cloud.spacing > 0.0 ? cloud.spacing : 1.0);
  SpatialIndex index(cloud.nodes, std::max(cloud.spacing, tol));
  for (const Node& n : cloud.nodes) {
    index.for_each_within(n.position, tol, [&](NodeId other, double) {
      if (other != n.id) {
        throw config_error("nodes " + std::to_string(n.id) + " and " + std::to_string(other) + " coincide");
      }
    });
  }
}

// Per-side boundary kinds of a rectangle.
struct SideKinds {
  BoundaryKind left = BoundaryKind::Dirichlet;
  BoundaryKind right = BoundaryKind::Dirichlet;
  BoundaryKind bottom = BoundaryKind::Robin;
  BoundaryKind top = BoundaryKind::Robin;
};

// Rectangle edges follow the counter-clockwise polygon (0,0),(X,0),(X,Y),(0,Y),
// so segment tags coincide with those of generate_irregular_cloud.
enum RectSide : int { kBottom = 0, kRight = 1, kTop = 2, kLeft = 3 };

inline Polygon rectangle_polygon(double x_extent, double y_extent) {
  return {{0.0, 0.0}, {x_extent, 0.0}, {x_extent, y_extent}, {0.0, y_extent}};
}

namespace detail {

inline std::size_t checked_divisions(double extent, double step, const char* what) {
  const double ratio = extent / step;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 || rounded < 1.0) {
    throw config_error(std::string(what) + " extent is not a positive integer multiple of the spacing");
  }
  return static_cast<std::size_t>(rounded);
}

// Kind, normal and segment of a polygon vertex shared by edges `in` and `out`.
inline void assign_corner(Node& node, const Polygon& poly, const std::vector<BoundaryKind>& kinds,
                          std::size_t in, std::size_t out) {
  const BoundaryKind kin = kinds[in];
  const BoundaryKind kout = kinds[out];
  if (kin == BoundaryKind::Dirichlet || kout == BoundaryKind::Dirichlet) {
    node.kind = NodeKind::Dirichlet;
    node.segment = static_cast<int>(kin == BoundaryKind::Dirichlet ? in : out);
    return;
  }
  node.kind = NodeKind::Robin;
  node.segment = static_cast<int>(in);
  const Vec2 sum = outward_normal(poly, in) + outward_normal(poly, out);
  node.normal = norm(sum) > 1e-12 ? normalized(sum) : outward_normal(poly, in);
}

}  // namespace detail

inline NodeCloud generate_cartesian_cloud(double x_extent, double y_extent, double dx, double dy,
                                          const SideKinds& sides) {
  if (!(dx > 0.0) || !(dy > 0.0)) throw config_error("cartesian cloud: spacings must be positive");
  if (!(x_extent > 0.0) || !(y_extent > 0.0)) throw config_error("cartesian cloud: extents must be positive");
  const std::size_t nx = detail::checked_divisions(x_extent, dx, "x");
  const std::size_t ny = detail::checked_divisions(y_extent, dy, "y");

  const Polygon rect = rectangle_polygon(x_extent, y_extent);
  const std::vector<BoundaryKind> edge_kinds{sides.bottom, sides.right, sides.top, sides.left};

  NodeCloud cloud;
  cloud.spacing = std::min(dx, dy);
  cloud.domain = rect;
  cloud.nodes.reserve((nx + 1) * (ny + 1));
  for (std::size_t j = 0; j <= ny; ++j) {
    for (std::size_t i = 0; i <= nx; ++i) {
      Node node;
      node.id = cloud.nodes.size();
      node.position = {static_cast<double>(i) * dx, static_cast<double>(j) * dy};
      const bool left = i == 0, right = i == nx, bottom = j == 0, top = j == ny;
      if ((left || right) && (bottom || top)) {
        // corner: incoming edge precedes the outgoing one counter-clockwise
        const std::size_t out = bottom ? (left ? kBottom : kRight) : (right ? kTop : kLeft);
        const std::size_t in = (out + 3) % 4;
        detail::assign_corner(node, rect, edge_kinds, in, out);
      } else if (left || right || bottom || top) {
        const std::size_t edge = left ? kLeft : right ? kRight : bottom ? kBottom : kTop;
        node.segment = static_cast<int>(edge);
        if (edge_kinds[edge] == BoundaryKind::Dirichlet) {
          node.kind = NodeKind::Dirichlet;
        } else {
          node.kind = NodeKind::Robin;
          node.normal = outward_normal(rect, edge);
        }
      }
      cloud.nodes.push_back(node);
    }
  }
  recount(cloud);
  return cloud;
}

inline double polygon_inscribed_width(const Polygon& poly) {
  const BoundingBox box = bounding_box(poly);
  const double w = box.hi.x - box.lo.x;
  const double h = box.hi.y - box.lo.y;
  const double step = std::min(w, h) / 64.0;
  double best = 0.0;
  for (double y = box.lo.y + 0.5 * step; y < box.hi.y; y += step) {
    for (double x = box.lo.x + 0.5 * step; x < box.hi.x; x += step) {
      const Vec2 p{x, y};
      if (point_in_polygon(p, poly)) best = std::max(best, distance_to_boundary(p, poly));
    }
  }
  return 2.0 * best;
}

struct IrregularCloudOptions {
  double spacing = 1.0;
  std::uint64_t seed = 0;
  double jitter = 0.3;  // displacement amplitude as a fraction of spacing, in [0, 0.5]
};

// Boundary nodes along every edge at about `spacing`, interior filled with a
// jittered lattice anchored at the polygon's bounding-box corner.
inline NodeCloud generate_irregular_cloud(const Polygon& polygon, const std::vector<BoundaryKind>& edge_kinds,
                                          const IrregularCloudOptions& opt) {
  const double s = opt.spacing;
  if (!(s > 0.0)) throw config_error("irregular cloud: spacing must be positive");
  if (polygon.size() < 3) throw config_error("irregular cloud: polygon needs at least three vertices");
  if (edge_kinds.size() != polygon.size()) throw config_error("irregular cloud: one boundary kind per edge required");
  if (opt.jitter < 0.0 || opt.jitter > 0.5) throw config_error("irregular cloud: jitter must lie in [0, 0.5]");
  if (!is_simple(polygon)) throw config_error("irregular cloud: polygon is self-intersecting");
  const double area = signed_area(polygon);
  if (area <= 0.0) throw config_error("irregular cloud: polygon must be counter-clockwise");
  if (area < s * s) throw config_error("irregular cloud: degenerate polygon (area below spacing squared)");
  if (s > polygon_inscribed_width(polygon)) {
    throw config_error("irregular cloud: spacing exceeds the polygon's inscribed width");
  }

  NodeCloud cloud;
  cloud.spacing = s;
  cloud.domain = polygon;
  const std::size_t ne = polygon.size();
  for (std::size_t e = 0; e < ne; ++e) {
    const Vec2 a = polygon[e];
    const Vec2 b = polygon[(e + 1) % ne];
    const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(distance(a, b) / s)));
    for (std::size_t k = 0; k < m; ++k) {
      Node node;
      node.id = cloud.nodes.size();
      const double t = static_cast<double>(k) / static_cast<double>(m);
      node.position = a + t * (b - a);
      if (k == 0) {
        detail::assign_corner(node, polygon, edge_kinds, (e + ne - 1) % ne, e);
      } else {
        node.segment = static_cast<int>(e);
        if (edge_kinds[e] == BoundaryKind::Dirichlet) {
          node.kind = NodeKind::Dirichlet;
        } else {
          node.kind = NodeKind::Robin;
          node.normal = outward_normal(polygon, e);
        }
      }
      cloud.nodes.push_back(node);
    }
  }

  const BoundingBox box = bounding_box(polygon);
  const auto nx = static_cast<std::size_t>(std::ceil((box.hi.x - box.lo.x) / s - 1e-9));
  const auto ny = static_cast<std::size_t>(std::ceil((box.hi.y - box.lo.y) / s - 1e-9));
  std::mt19937_64 rng(opt.seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const double min_gap = 0.5 * s * (1.0 - 1e-12);

  std::vector<Vec2> accepted;
  for (const Node& n : cloud.nodes) accepted.push_back(n.position);
  // bucket grid with cell s for the pairwise rejection test
  const auto gx = nx + 3, gy = ny + 3;
  std::vector<std::vector<std::size_t>> grid(gx * gy);
  auto cell_of = [&](Vec2 p) {
    const auto ix = std::clamp<long>(std::lround(std::floor((p.x - box.lo.x) / s)) + 1, 0, static_cast<long>(gx) - 1);
    const auto iy = std::clamp<long>(std::lround(std::floor((p.y - box.lo.y) / s)) + 1, 0, static_cast<long>(gy) - 1);
    return std::pair<long, long>(ix, iy);
  };
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    auto [ix, iy] = cell_of(accepted[k]);
    grid[static_cast<std::size_t>(iy) * gx + static_cast<std::size_t>(ix)].push_back(k);
  }

  for (std::size_t j = 0; j <= ny; ++j) {
    for (std::size_t i = 0; i <= nx; ++i) {
      // always draw two numbers per lattice point so the sequence is layout independent
      const double ux = uniform() - 0.5;
      const double uy = uniform() - 0.5;
      const Vec2 p{box.lo.x + static_cast<double>(i) * s + opt.jitter * s * ux,
                   box.lo.y + static_cast<double>(j) * s + opt.jitter * s * uy};
      if (!point_in_polygon(p, polygon) || distance_to_boundary(p, polygon) < min_gap) continue;
      auto [ix, iy] = cell_of(p);
      bool ok = true;
      for (long cy = std::max(0L, iy - 1); ok && cy <= std::min<long>(static_cast<long>(gy) - 1, iy + 1); ++cy) {
        for (long cx = std::max(0L, ix - 1); ok && cx <= std::min<long>(static_cast<long>(gx) - 1, ix + 1); ++cx) {
          for (std::size_t k : grid[static_cast<std::size_t>(cy) * gx + static_cast<std::size_t>(cx)]) {
            if (distance(accepted[k], p) < min_gap) {
              ok = false;
              break;
            }
          }
        }
      }
      if (!ok) continue;
      grid[static_cast<std::size_t>(iy) * gx + static_cast<std::size_t>(ix)].push_back(accepted.size());
      accepted.push_back(p);
      Node node;
      node.id = cloud.nodes.size();
      node.position = p;
      cloud.nodes.push_back(node);
    }
  }
  recount(cloud);
  return cloud;
}

// Appends one Virtual node per Robin node at position + offset * normal.
inline NodeCloud add_virtual_nodes(const NodeCloud& cloud, double offset) {
  if (!(offset > 0.0)) throw config_error("virtual node offset must be positive");
  NodeCloud out = cloud;
  const double tol = 1e-9 * (cloud.spacing > 0.0 ? cloud.spacing : 1.0);
  for (const Node& n : cloud.nodes) {
    if (n.kind != NodeKind::Robin) continue;
    if (!n.normal) throw config_error("robin node " + std::to_string(n.id) + " has no normal");
    Node v;
    v.id = out.nodes.size();
    v.kind = NodeKind::Virtual;
    v.position = n.position + offset * *n.normal;
    v.host = n.id;
    v.segment = n.segment;
    if (cloud.domain && point_in_closed_polygon(v.position, *cloud.domain, tol)) {
      throw config_error("virtual node for boundary node " + std::to_string(n.id) +
                         " falls inside the domain; reduce the offset");
    }
    out.nodes.push_back(v);
  }
  recount(out);
  return out;
}

struct Stencil {
  NodeId center = 0;
  std::vector<NodeId> neighbors;
  std::vector<Vec2> offsets;      // neighbour minus centre
  std::vector<double> distances;
  double radius = 0.0;

  std::size_t size() const { return neighbors.size(); }
};

// Neighbour search bound to one cloud and radius; safe for concurrent queries.
class StencilFinder {
 public:
  StencilFinder(const NodeCloud& cloud, double radius)
      : cloud_(&cloud), radius_(radius), index_(cloud.nodes, radius > 0.0 ? radius : 1.0) {
    if (!(radius > 0.0)) throw config_error("influence radius must be positive");
  }

  Stencil find(NodeId center) const {
    Stencil st;
    st.center = center;
    st.radius = radius_;
    const Vec2 c = cloud_->position(center);
    index_.for_each_within(c, radius_, [&](NodeId id, double) {
      if (id != center) st.neighbors.push_back(id);
    });
    std::sort(st.neighbors.begin(), st.neighbors.end());
    for (NodeId id : st.neighbors) {
      const Vec2 d = cloud_->position(id) - c;
      st.offsets.push_back(d);
      st.distances.push_back(norm(d));
    }
    if (st.neighbors.size() < 5) {
      throw config_error("stencil underdetermined at node " + std::to_string(center) + ": " +
                         std::to_string(st.neighbors.size()) + " neighbours within radius");
    }
    return st;
  }

  double radius() const { return radius_; }

 private:
  const NodeCloud* cloud_;
  double radius_;
  SpatialIndex index_;
};

inline Stencil find_stencil(const NodeCloud& cloud, NodeId center, double radius) {
  return StencilFinder(cloud, radius).find(center);
}

// ---- CSV exchange: id,x,y,kind,n_x,n_y,host -------------------------------

inline void write_cloud_csv(std::ostream& os, const NodeCloud& cloud) {
  os << "id,x,y,kind,n_x,n_y,host\n";
  os << std::setprecision(17);
  for (const Node& n : cloud.nodes) {
    os << n.id << ',' << n.position.x << ',' << n.position.y << ',' << to_string(n.kind) << ',';
    if (n.normal) os << n.normal->x << ',' << n.normal->y;
    else os << ',';
    os << ',';
    if (n.host) os << *n.host;
    os << '\n';
  }
}

inline void write_cloud_csv(const std::string& path, const NodeCloud& cloud) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  write_cloud_csv(os, cloud);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

/// Smallest distance between two nodes (sweep over x-sorted positions).
inline double min_pair_distance(const std::vector<Node>& nodes) {
  std::vector<Vec2> pts;
  for (const Node& n : nodes) pts.push_back(n.position);
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size() && pts[j].x - pts[i].x < best; ++j) {
      best = std::min(best, distance(pts[i], pts[j]));
    }
  }
  return best;
}

inline NodeCloud read_cloud_csv(std::istream& is, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw io_error(source + ": empty cloud file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,x,y,kind,n_x,n_y,host") throw io_error(source + ": unexpected cloud header '" + line + "'");
  NodeCloud cloud;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw io_error(source + ":" + std::to_string(lineno) + ": expected 7 fields");
    try {
      Node n;
      n.id = std::stoul(f[0]);
      n.position = {std::stod(f[1]), std::stod(f[2])};
      n.kind = parse_node_kind(f[3]);
      if (!f[4].empty() || !f[5].empty()) n.normal = Vec2{std::stod(f[4]), std::stod(f[5])};
      if (!f[6].empty()) n.host = std::stoul(f[6]);
      if (n.kind != NodeKind::Interior) n.segment = 0;
      cloud.nodes.push_back(n);
    } catch (const std::logic_error&) {
      throw io_error(source + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  recount(cloud);
  cloud.spacing = min_pair_distance(cloud.nodes);
  if (!(cloud.spacing > 0.0) || !std::isfinite(cloud.spacing)) cloud.spacing = 1.0;
  validate_cloud(cloud);
  return cloud;
}

inline NodeCloud read_cloud_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open cloud file '" + path + "'");
  return read_cloud_csv(is, path);
}

}  // namespace ugfdm
