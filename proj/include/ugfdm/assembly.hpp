#pragma once

// Fully implicit residual of the meshless scheme: flow equations at interior
// and Robin nodes, derivative boundary conditions at their virtual nodes,
// Dirichlet rows at Dirichlet nodes. Unknowns interleave (p_i, Sw_i).

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ugfdm/cloud.hpp"
#include "ugfdm/dual.hpp"
#include "ugfdm/operators.hpp"
#include "ugfdm/physics.hpp"
#include "ugfdm/sparse.hpp"

namespace ugfdm {

struct DirichletValue {
  double value = 0.0;
  friend bool operator==(const DirichletValue&, const DirichletValue&) = default;
};

/// a*u + b*du/dn = g
struct RobinCoeffs {
  double a = 0.0;
  double b = 1.0;
  double g = 0.0;
  friend bool operator==(const RobinCoeffs&, const RobinCoeffs&) = default;
};

using VariableBC = std::variant<DirichletValue, RobinCoeffs>;

struct BoundarySpec {
  VariableBC p;
  VariableBC sw;
  friend bool operator==(const BoundarySpec&, const BoundarySpec&) = default;
};

enum class Variable { Pressure = 0, Saturation = 1 };

inline const VariableBC& spec_for(const BoundarySpec& s, Variable v) { return v == Variable::Pressure ? s.p : s.sw; }

inline RobinCoeffs as_robin(const VariableBC& bc) {
  if (const auto* d = std::get_if<DirichletValue>(&bc)) return {1.0, 0.0, d->value};
  const auto& r = std::get<RobinCoeffs>(bc);
  if (r.a == 0.0 && r.b == 0.0) throw config_error("robin condition with a = b = 0");
  return r;
}

/// Per-node boundary specs from per-segment specs.
inline std::vector<std::optional<BoundarySpec>> node_specs_from_segments(const NodeCloud& cloud,
                                                                         const std::map<int, BoundarySpec>& by_segment) {
  std::vector<std::optional<BoundarySpec>> specs(cloud.size());
  for (const Node& n : cloud.nodes) {
    if (n.kind != NodeKind::Dirichlet && n.kind != NodeKind::Robin) continue;
    auto it = by_segment.find(n.segment);
    if (it == by_segment.end()) {
      throw config_error("no boundary specification for segment " + std::to_string(n.segment) + " (node " +
                         std::to_string(n.id) + ")");
    }
    specs[n.id] = it->second;
  }
  return specs;
}

// ---- templated kernels shared by residual and Jacobian evaluation ---------

template <class T>
struct PhasePair {
  T oil;
  T water;
};

/// Flux of one stencil pair into node i: alpha*k_ij*lambda_up*(e3+e4)_j*(p_j - p_i).
template <class T>
PhasePair<T> pair_flux(const T& p_i, const T& sw_i, const T& p_j, const T& sw_j, double laplace_coef,
                       const PairParts& parts, const ReservoirModel& m) {
  const Mobilities<T> mob = upwind_mobilities(p_i, p_j, sw_i, sw_j, parts, m);
  const T drive = T(m.alpha * parts.k * laplace_coef) * (p_j - p_i);
  return {mob.oil * drive, mob.water * drive};
}

/// Source minus backward-Euler accumulation at node i.
template <class T>
PhasePair<T> source_minus_accumulation(const T& p, const T& sw, double p_old, double sw_old, double dt,
                                       std::size_t i, const ReservoirModel& m) {
  const T phi = porosity(p, m);
  const double phi_old = porosity(p_old, m);
  const T inv_dt(1.0 / dt);
  const T oil = T(m.q_o[i]) - inv_dt * (phi * (T(1.0) - sw) - T(phi_old * (1.0 - sw_old)));
  const T water = T(m.q_w[i]) - inv_dt * (phi * sw - T(phi_old * sw_old));
  return {oil, water};
}

/// One term b*(n_x e1_j + n_y e2_j)*(u_j - u_a) of a Robin row.
template <class T>
T robin_term(const T& u_a, const T& u_j, double directional_coef, double b) {
  return T(b * directional_coef) * (u_j - u_a);
}

// ---- the discrete problem --------------------------------------------------

class GfdmProblem {
 public:
  GfdmProblem(NodeCloud cloud, DiffOperators ops, ReservoirModel model,
              std::vector<std::optional<BoundarySpec>> specs)
      : cloud_(std::move(cloud)), ops_(std::move(ops)), model_(std::move(model)), specs_(std::move(specs)) {
    setup();
  }

  const NodeCloud& cloud() const { return cloud_; }
  const DiffOperators& operators() const { return ops_; }
  const ReservoirModel& model() const { return model_; }
  const std::vector<std::optional<BoundarySpec>>& specs() const { return specs_; }
  std::size_t num_nodes() const { return cloud_.size(); }
  std::size_t num_unknowns() const { return 2 * cloud_.size(); }
  const SparseMatrix& pattern() const { return pattern_; }

  /// Flow residual pair (oil, water) of an interior or Robin node.
  std::pair<double, double> flow_residuals(NodeId i, const SimState& s, const SimState& old, double dt) const {
    const NodeOperators& op = ops_.at(i);
    double ro = 0.0, rw = 0.0;
    for (std::size_t k = 0; k < op.size(); ++k) {
      const NodeId j = op.stencil.neighbors[k];
      const auto f = pair_flux<double>(s.p[i], s.sw[i], s.p[j], s.sw[j], laplace_[i][k], pair_parts_[i][k], model_);
      ro += f.oil;
      rw += f.water;
    }
    const auto acc = source_minus_accumulation<double>(s.p[i], s.sw[i], old.p[i], old.sw[i], dt, i, model_);
    return {ro + acc.oil, rw + acc.water};
  }

  /// Boundary-condition residual carried by virtual node b for one variable.
  double robin_residual(NodeId b, Variable var, const SimState& s) const {
    const Node& vb = cloud_[b];
    if (vb.kind != NodeKind::Virtual) throw config_error("node " + std::to_string(b) + " is not virtual");
    const NodeId a = *vb.host;
    const RobinCoeffs rc = as_robin(spec_for(*specs_[a], var));
    const std::vector<double>& u = var == Variable::Pressure ? s.p : s.sw;
    const NodeOperators& op = ops_.at(a);
    double r = rc.a * u[a] - rc.g;
    for (std::size_t k = 0; k < op.size(); ++k) {
      r += robin_term<double>(u[a], u[op.stencil.neighbors[k]], directional_[a][k], rc.b);
    }
    return r;
  }

  double dirichlet_residual(NodeId c, Variable var, const SimState& s) const {
    const auto& bc = spec_for(*specs_[c], var);
    const double u = var == Variable::Pressure ? s.p[c] : s.sw[c];
    return u - std::get<DirichletValue>(bc).value;
  }

  void residual(const SimState& s, const SimState& old, double dt, std::vector<double>& r) const {
    r.assign(num_unknowns(), 0.0);
    for (const Node& n : cloud_.nodes) {
      const std::size_t row = 2 * n.id;
      switch (n.kind) {
        case NodeKind::Interior:
        case NodeKind::Robin: {
          const auto [ro, rw] = flow_residuals(n.id, s, old, dt);
          r[row] = ro;
          r[row + 1] = rw;
          break;
        }
        case NodeKind::Virtual:
          r[row] = robin_residual(n.id, Variable::Pressure, s);
          r[row + 1] = robin_residual(n.id, Variable::Saturation, s);
          break;
        case NodeKind::Dirichlet:
          r[row] = dirichlet_residual(n.id, Variable::Pressure, s);
          r[row + 1] = dirichlet_residual(n.id, Variable::Saturation, s);
          break;
      }
    }
  }

  /// Residual and its exact Jacobian by forward-mode differentiation of the
  /// same kernels. The upwind choice follows the current pressures.
  void jacobian(const SimState& s, const SimState& old, double dt, SparseMatrix& J, std::vector<double>& r) const {
    if (J.rows() != pattern_.rows() || J.nonZeros() != pattern_.nonZeros()) J = pattern_;
    zero_values(J);
    r.assign(num_unknowns(), 0.0);
    using D4 = Dual<4>;
    using D2 = Dual<2>;
    for (const Node& n : cloud_.nodes) {
      const NodeId i = n.id;
      const int ro = static_cast<int>(2 * i), rw = ro + 1;
      const int cp_i = ro, cs_i = rw;
      switch (n.kind) {
        case NodeKind::Interior:
        case NodeKind::Robin: {
          const NodeOperators& op = ops_.at(i);
          for (std::size_t k = 0; k < op.size(); ++k) {
            const NodeId j = op.stencil.neighbors[k];
            const int cp_j = static_cast<int>(2 * j), cs_j = cp_j + 1;
            const auto f = pair_flux(D4::variable(s.p[i], 0), D4::variable(s.sw[i], 1), D4::variable(s.p[j], 2),
                                     D4::variable(s.sw[j], 3), laplace_[i][k], pair_parts_[i][k], model_);
            r[ro] += f.oil.v;
            r[rw] += f.water.v;
            const int cols[4] = {cp_i, cs_i, cp_j, cs_j};
            for (int c = 0; c < 4; ++c) {
              add_entry(J, ro, cols[c], f.oil.d[c]);
              add_entry(J, rw, cols[c], f.water.d[c]);
            }
          }
          const auto acc = source_minus_accumulation(D2::variable(s.p[i], 0), D2::variable(s.sw[i], 1), old.p[i],
                                                     old.sw[i], dt, i, model_);
          r[ro] += acc.oil.v;
          r[rw] += acc.water.v;
          add_entry(J, ro, cp_i, acc.oil.d[0]);
          add_entry(J, ro, cs_i, acc.oil.d[1]);
          add_entry(J, rw, cp_i, acc.water.d[0]);
          add_entry(J, rw, cs_i, acc.water.d[1]);
          break;
        }
        case NodeKind::Virtual: {
          const NodeId a = *n.host;
          const NodeOperators& op = ops_.at(a);
          for (int v = 0; v < 2; ++v) {
            const Variable var = v == 0 ? Variable::Pressure : Variable::Saturation;
            const RobinCoeffs rc = as_robin(spec_for(*specs_[a], var));
            const std::vector<double>& u = v == 0 ? s.p : s.sw;
            const int row = ro + v;
            const int col_a = static_cast<int>(2 * a) + v;
            D2 total = D2(rc.a) * D2::variable(u[a], 0) - D2(rc.g);
            r[row] += total.v;
            add_entry(J, row, col_a, total.d[0]);
            for (std::size_t k = 0; k < op.size(); ++k) {
              const NodeId j = op.stencil.neighbors[k];
              const D2 t = robin_term(D2::variable(u[a], 0), D2::variable(u[j], 1), directional_[a][k], rc.b);
              r[row] += t.v;
              add_entry(J, row, col_a, t.d[0]);
              add_entry(J, row, static_cast<int>(2 * j) + v, t.d[1]);
            }
          }
          break;
        }
        case NodeKind::Dirichlet: {
          const D2 up = D2::variable(s.p[i], 0) - D2(std::get<DirichletValue>(specs_[i]->p).value);
          const D2 us = D2::variable(s.sw[i], 1) - D2(std::get<DirichletValue>(specs_[i]->sw).value);
          r[ro] = up.v;
          r[rw] = us.v;
          add_entry(J, ro, cp_i, up.d[0]);
          add_entry(J, rw, cs_i, us.d[1]);
          break;
        }
      }
    }
  }

  /// Laplacian coefficient (e3 + e4) of stencil member k at node i.
  double laplace_coef(NodeId i, std::size_t k) const { return laplace_[i][k]; }
  std::optional<NodeId> virtual_of(NodeId robin) const { return virtual_of_[robin]; }

 private:
  void setup() {
    const std::size_t n = cloud_.size();
    model_.validate();
    if (model_.size() != n) throw config_error("reservoir model size does not match the cloud");
    if (specs_.size() != n) throw config_error("boundary spec list size does not match the cloud");
    virtual_of_.assign(n, std::nullopt);
    for (const Node& node : cloud_.nodes) {
      if (node.kind == NodeKind::Virtual) virtual_of_[*node.host] = node.id;
    }
    laplace_.assign(n, {});
    directional_.assign(n, {});
    pair_parts_.assign(n, {});
    std::vector<std::pair<int, int>> entries;
    auto couple = [&entries](NodeId row_node, NodeId col_node) {
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          entries.emplace_back(static_cast<int>(2 * row_node) + a, static_cast<int>(2 * col_node) + b);
    };
    for (const Node& node : cloud_.nodes) {
      const NodeId i = node.id;
      switch (node.kind) {
        case NodeKind::Interior:
        case NodeKind::Robin: {
          const NodeOperators& op = ops_.at(i);
          const auto& e3 = op.row(kDxx);
          const auto& e4 = op.row(kDyy);
          for (std::size_t k = 0; k < op.size(); ++k) {
            laplace_[i].push_back(e3[k] + e4[k]);
            pair_parts_[i].push_back(pair_transmissibility_parts(i, op.stencil.neighbors[k], model_));
            couple(i, op.stencil.neighbors[k]);
          }
          couple(i, i);
          if (node.kind == NodeKind::Robin) {
            if (!specs_[i]) throw config_error("robin node " + std::to_string(i) + " has no boundary spec");
            as_robin(specs_[i]->p);
            as_robin(specs_[i]->sw);
            if (!virtual_of_[i]) throw config_error("robin node " + std::to_string(i) + " has no virtual node");
            const auto& nb = op.stencil.neighbors;
            if (!std::binary_search(nb.begin(), nb.end(), *virtual_of_[i])) {
              throw config_error("virtual node " + std::to_string(*virtual_of_[i]) +
                                 " lies outside the influence domain of its host " + std::to_string(i) +
                                 "; increase the radius");
            }
            const Vec2 nrm = *node.normal;
            const auto& e1 = op.row(kDx);
            const auto& e2 = op.row(kDy);
            for (std::size_t k = 0; k < op.size(); ++k) directional_[i].push_back(nrm.x * e1[k] + nrm.y * e2[k]);
          }
          break;
        }
        case NodeKind::Virtual: {
          const NodeId a = *node.host;
          couple(i, a);
          for (NodeId j : ops_.at(a).stencil.neighbors) couple(i, j);
          break;
        }
        case NodeKind::Dirichlet: {
          if (!specs_[i]) throw config_error("dirichlet node " + std::to_string(i) + " has no boundary spec");
          if (!std::holds_alternative<DirichletValue>(specs_[i]->p) ||
              !std::holds_alternative<DirichletValue>(specs_[i]->sw)) {
            throw config_error("dirichlet node " + std::to_string(i) + " needs dirichlet values for p and sw");
          }
          couple(i, i);
          break;
        }
      }
    }
    pattern_ = make_pattern(num_unknowns(), entries);
  }

  NodeCloud cloud_;
  DiffOperators ops_;
  ReservoirModel model_;
  std::vector<std::optional<BoundarySpec>> specs_;
  std::vector<std::optional<NodeId>> virtual_of_;
  std::vector<std::vector<double>> laplace_;
  std::vector<std::vector<double>> directional_;
  std::vector<std::vector<PairParts>> pair_parts_;
  SparseMatrix pattern_;
};

struct ResidualSystem {
  std::vector<double> residual;
  const SparseMatrix* pattern = nullptr;

  std::size_t rows() const { return residual.size(); }
};

inline ResidualSystem assemble(const GfdmProblem& problem, const SimState& s, const SimState& old, double dt) {
  ResidualSystem sys;
  problem.residual(s, old, dt, sys.residual);
  sys.pattern = &problem.pattern();
  return sys;
}

/// Uniform initial state with Dirichlet nodes set to their boundary values.
inline SimState initial_state(const NodeCloud& cloud, double p0, double sw0,
                              const std::vector<std::optional<BoundarySpec>>& specs) {
  SimState s;
  s.p.assign(cloud.size(), p0);
  s.sw.assign(cloud.size(), sw0);
  for (const Node& n : cloud.nodes) {
    if (n.kind != NodeKind::Dirichlet || !specs[n.id]) continue;
    if (const auto* d = std::get_if<DirichletValue>(&specs[n.id]->p)) s.p[n.id] = d->value;
    if (const auto* d = std::get_if<DirichletValue>(&specs[n.id]->sw)) s.sw[n.id] = d->value;
  }
  return s;
}

}  // namespace ugfdm
