#pragma once

// Generalized finite difference operators: for every node, five coefficient
// rows that turn neighbour differences (u_j - u_0) into ux, uy, uxx, uyy, uxy.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "ugfdm/cloud.hpp"

namespace ugfdm {

enum Derivative : std::size_t { kDx = 0, kDy = 1, kDxx = 2, kDyy = 3, kDxy = 4 };

/// Quartic spline weight, 1 at the centre and 0 with zero slope at r = r_e.
inline double weight(double r, double r_e) {
  if (r > r_e) return 0.0;
  const double q = r / r_e;
  const double q2 = q * q;
  return 1.0 - 6.0 * q2 + 8.0 * q2 * q - 3.0 * q2 * q2;
}

inline double weight_derivative(double r, double r_e) {
  if (r > r_e) return 0.0;
  const double q = r / r_e;
  return (-12.0 * q + 24.0 * q * q - 12.0 * q * q * q) / r_e;
}

struct NodeOperators {
  Stencil stencil;
  std::array<std::vector<double>, 5> rows;
  double rcond = 0.0;  // reciprocal condition of the equilibrated normal matrix

  std::size_t size() const { return stencil.size(); }
  const std::vector<double>& row(Derivative d) const { return rows[d]; }
};

struct DerivativeBundle {
  double ux = 0.0, uy = 0.0, uxx = 0.0, uyy = 0.0, uxy = 0.0;
};

// Below this reciprocal condition number the local system is reported as degenerate.
inline constexpr double kDegenerateRcond = 1e-12;

/// Weighted least squares on the local second-order Taylor expansion.
///
/// Each neighbour contributes the row (dx, dy, dx^2/2, dy^2/2, dx*dy) with
/// weight w_j^2; the normal matrix is Jacobi-equilibrated before its
/// conditioning is tested and factorised, so tiny but legitimate weights at
/// r ~ r_e (e.g. diagonal neighbours on a lattice) do not read as degeneracy.
inline NodeOperators build_node_operators(Stencil stencil) {
  const std::size_t n = stencil.size();
  Eigen::Matrix<double, Eigen::Dynamic, 5> L(static_cast<Eigen::Index>(n), 5);
  Eigen::VectorXd w2(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 d = stencil.offsets[j];
    const auto jj = static_cast<Eigen::Index>(j);
    L(jj, 0) = d.x;
    L(jj, 1) = d.y;
    L(jj, 2) = 0.5 * d.x * d.x;
    L(jj, 3) = 0.5 * d.y * d.y;
    L(jj, 4) = d.x * d.y;
    const double w = weight(stencil.distances[j], stencil.radius);
    w2(jj) = w * w;
  }
  const Eigen::Matrix<double, 5, Eigen::Dynamic> LtW = L.transpose() * w2.asDiagonal();
  const Eigen::Matrix<double, 5, 5> A = LtW * L;

  Eigen::Matrix<double, 5, 1> scale;
  for (int k = 0; k < 5; ++k) {
    if (!(A(k, k) > 0.0)) {
      throw config_error("degenerate stencil at node " + std::to_string(stencil.center) +
                         ": derivative unknown " + std::to_string(k) + " is unconstrained");
    }
    scale(k) = 1.0 / std::sqrt(A(k, k));
  }
  const Eigen::Matrix<double, 5, 5> As = scale.asDiagonal() * A * scale.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> eig(As, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  // roundoff can leave the smallest eigenvalue slightly negative
  const double rcond = lmax > 0.0 ? std::max(lmin, 0.0) / lmax : 0.0;
  if (!(rcond >= kDegenerateRcond)) {
    std::ostringstream msg;
    msg << "degenerate stencil at node " << stencil.center << " (reciprocal condition " << std::setprecision(3)
        << rcond << ", " << stencil.size() << " neighbours)";
    throw config_error(msg.str());
  }
  const Eigen::LDLT<Eigen::Matrix<double, 5, 5>> ldlt(As);
  // E = A^{-1} L^T W with A = S^{-1} As S^{-1}  =>  E = S As^{-1} S L^T W
  const Eigen::Matrix<double, 5, Eigen::Dynamic> E =
      scale.asDiagonal() * ldlt.solve(scale.asDiagonal() * LtW);

  NodeOperators ops;
  ops.rcond = rcond;
  for (std::size_t m = 0; m < 5; ++m) {
    ops.rows[m].resize(n);
    for (std::size_t j = 0; j < n; ++j) ops.rows[m][j] = E(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j));
  }
  ops.stencil = std::move(stencil);
  return ops;
}

inline bool needs_operators(const Node& n) {
  return n.kind == NodeKind::Interior || n.kind == NodeKind::Robin;
}

class DiffOperators {
 public:
  DiffOperators() = default;
  explicit DiffOperators(std::size_t n_nodes, double radius) : ops_(n_nodes), radius_(radius) {}

  bool has(NodeId i) const { return i < ops_.size() && ops_[i].has_value(); }
  const NodeOperators& at(NodeId i) const {
    if (!has(i)) throw config_error("no operators built for node " + std::to_string(i));
    return *ops_[i];
  }
  void set(NodeId i, NodeOperators op) { ops_[i] = std::move(op); }
  std::size_t node_count() const { return ops_.size(); }
  double radius() const { return radius_; }

 private:
  std::vector<std::optional<NodeOperators>> ops_;
  double radius_ = 0.0;
};

inline DiffOperators build_operators(const NodeCloud& cloud, double radius,
                                     const std::function<bool(const Node&)>& select = needs_operators) {
  DiffOperators ops(cloud.size(), radius);
  const StencilFinder finder(cloud, radius);
  for (const Node& n : cloud.nodes) {
    if (select(n)) ops.set(n.id, build_node_operators(finder.find(n.id)));
  }
  return ops;
}

inline DerivativeBundle apply_operators(const NodeOperators& op, std::span<const double> field) {
  const NodeId c = op.stencil.center;
  if (c >= field.size()) throw config_error("field does not cover node " + std::to_string(c));
  std::array<double, 5> acc{};
  for (std::size_t j = 0; j < op.size(); ++j) {
    const NodeId nb = op.stencil.neighbors[j];
    if (nb >= field.size()) throw config_error("field does not cover stencil member " + std::to_string(nb));
    const double du = field[nb] - field[c];
    for (std::size_t m = 0; m < 5; ++m) acc[m] += op.rows[m][j] * du;
  }
  return {acc[0], acc[1], acc[2], acc[3], acc[4]};
}

inline DerivativeBundle apply_operators(const DiffOperators& ops, std::span<const double> field, NodeId node) {
  return apply_operators(ops.at(node), field);
}

struct StencilQuality {
  std::size_t neighbor_count = 0;
  double centroid_offset = 0.0;  // |mean neighbour offset| / r_e
  // Per row: sum of coefficients over the nearest neighbour column left of
  // the centre (all nodes sharing that x-offset).
  std::array<double, 5> column_imbalance{};
  // Per row: sum of coefficients over every neighbour with a negative x-offset.
  std::array<double, 5> half_plane_imbalance{};
  double rcond = 0.0;
};

/// Symmetry diagnostics. For a stencil mirror-symmetric about the vertical
/// line through the centre, nodes in one column carry the same transported
/// value in a left-to-right flood, so the column sum of the uy row is the
/// error coefficient multiplying that jump.
inline StencilQuality stencil_quality(const NodeOperators& op) {
  StencilQuality q;
  const Stencil& st = op.stencil;
  q.neighbor_count = st.size();
  q.rcond = op.rcond;
  Vec2 mean{};
  for (const Vec2& d : st.offsets) mean = mean + d;
  if (!st.offsets.empty()) mean = (1.0 / static_cast<double>(st.offsets.size())) * mean;
  q.centroid_offset = norm(mean) / st.radius;

  const double tol = 1e-9 * st.radius;
  double nearest = -std::numeric_limits<double>::infinity();
  for (const Vec2& d : st.offsets) {
    if (d.x < -tol) nearest = std::max(nearest, d.x);
  }
  for (std::size_t j = 0; j < st.size(); ++j) {
    const double dx = st.offsets[j].x;
    for (std::size_t m = 0; m < 5; ++m) {
      if (dx < -tol) q.half_plane_imbalance[m] += op.rows[m][j];
      if (std::isfinite(nearest) && std::abs(dx - nearest) <= tol) q.column_imbalance[m] += op.rows[m][j];
    }
  }
  return q;
}

inline StencilQuality stencil_quality(const DiffOperators& ops, NodeId node) { return stencil_quality(ops.at(node)); }

/// CSV dump: node,neighbor,e1..e5 for every node with operators.
inline void write_operators_csv(std::ostream& os, const DiffOperators& ops) {
  os << "node,neighbor,e1,e2,e3,e4,e5\n" << std::setprecision(17);
  for (NodeId i = 0; i < ops.node_count(); ++i) {
    if (!ops.has(i)) continue;
    const NodeOperators& op = ops.at(i);
    for (std::size_t j = 0; j < op.size(); ++j) {
      os << i << ',' << op.stencil.neighbors[j];
      for (std::size_t m = 0; m < 5; ++m) os << ',' << op.rows[m][j];
      os << '\n';
    }
  }
}

}  // namespace ugfdm
