#pragma once

// Reference solver: vertex-centred five-point two-point-flux upwind finite
// differences on a rectangle, independent of the meshless operators.

#include <cmath>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ugfdm/assembly.hpp"
#include "ugfdm/dual.hpp"
#include "ugfdm/physics.hpp"
#include "ugfdm/solver.hpp"
#include "ugfdm/sparse.hpp"

namespace ugfdm {

struct FdmGrid {
  std::size_t nx = 2;  // intervals along x; nx + 1 node columns
  std::size_t ny = 2;
  double dx = 1.0;
  double dy = 1.0;

  std::size_t columns() const { return nx + 1; }
  std::size_t rows() const { return ny + 1; }
  std::size_t size() const { return columns() * rows(); }
  std::size_t index(std::size_t i, std::size_t j) const { return j * columns() + i; }
  Vec2 position(std::size_t id) const {
    return {static_cast<double>(id % columns()) * dx, static_cast<double>(id / columns()) * dy};
  }

  void validate() const {
    if (nx < 2 || ny < 2) throw config_error("fdm grid needs at least two intervals per direction");
    if (!(dx > 0.0) || !(dy > 0.0)) throw config_error("fdm grid spacings must be positive");
  }
};

struct FixedValues {
  double p = 0.0;
  double sw = 0.0;
  friend bool operator==(const FixedValues&, const FixedValues&) = default;
};

struct NoFlow {
  friend bool operator==(const NoFlow&, const NoFlow&) = default;
};

using FdmSideBC = std::variant<FixedValues, NoFlow>;

struct FdmSides {
  FdmSideBC left = FixedValues{15.0, 0.8};
  FdmSideBC right = FixedValues{10.0, 0.2};
  FdmSideBC bottom = NoFlow{};
  FdmSideBC top = NoFlow{};
};

class FdmProblem {
 public:
  /// `fixed` optionally pins individual nodes (e.g. grid nodes outside an
  /// irregular domain); it takes precedence over the side conditions.
  FdmProblem(FdmGrid grid, ReservoirModel model, FdmSides sides,
             std::vector<std::optional<FixedValues>> fixed = {})
      : grid_(grid), model_(std::move(model)), sides_(std::move(sides)), fixed_(std::move(fixed)) {
    setup();
  }

  const FdmGrid& grid() const { return grid_; }
  const ReservoirModel& model() const { return model_; }
  std::size_t num_nodes() const { return grid_.size(); }
  std::size_t num_unknowns() const { return 2 * grid_.size(); }
  const SparseMatrix& pattern() const { return pattern_; }
  const std::optional<FixedValues>& fixed(std::size_t id) const { return fixed_[id]; }

  void residual(const SimState& s, const SimState& old, double dt, std::vector<double>& r) const {
    r.assign(num_unknowns(), 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (fixed_[i]) {
        r[2 * i] = s.p[i] - fixed_[i]->p;
        r[2 * i + 1] = s.sw[i] - fixed_[i]->sw;
        continue;
      }
      for (const Link& l : links_[i]) {
        const auto f = pair_flux<double>(s.p[i], s.sw[i], s.p[l.j], s.sw[l.j], l.coef, l.parts, model_);
        r[2 * i] += f.oil;
        r[2 * i + 1] += f.water;
      }
      const auto acc = source_minus_accumulation<double>(s.p[i], s.sw[i], old.p[i], old.sw[i], dt, i, model_);
      r[2 * i] += acc.oil;
      r[2 * i + 1] += acc.water;
    }
  }

  void jacobian(const SimState& s, const SimState& old, double dt, SparseMatrix& J, std::vector<double>& r) const {
    if (J.rows() != pattern_.rows() || J.nonZeros() != pattern_.nonZeros()) J = pattern_;
    zero_values(J);
    r.assign(num_unknowns(), 0.0);
    using D4 = Dual<4>;
    using D2 = Dual<2>;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const int ro = static_cast<int>(2 * i), rw = ro + 1;
      if (fixed_[i]) {
        r[ro] = s.p[i] - fixed_[i]->p;
        r[rw] = s.sw[i] - fixed_[i]->sw;
        add_entry(J, ro, ro, 1.0);
        add_entry(J, rw, rw, 1.0);
        continue;
      }
      for (const Link& l : links_[i]) {
        const auto f = pair_flux(D4::variable(s.p[i], 0), D4::variable(s.sw[i], 1), D4::variable(s.p[l.j], 2),
                                 D4::variable(s.sw[l.j], 3), l.coef, l.parts, model_);
        r[ro] += f.oil.v;
        r[rw] += f.water.v;
        const int cols[4] = {ro, rw, static_cast<int>(2 * l.j), static_cast<int>(2 * l.j + 1)};
        for (int c = 0; c < 4; ++c) {
          add_entry(J, ro, cols[c], f.oil.d[c]);
          add_entry(J, rw, cols[c], f.water.d[c]);
        }
      }
      const auto acc = source_minus_accumulation(D2::variable(s.p[i], 0), D2::variable(s.sw[i], 1), old.p[i],
                                                 old.sw[i], dt, i, model_);
      r[ro] += acc.oil.v;
      r[rw] += acc.water.v;
      add_entry(J, ro, ro, acc.oil.d[0]);
      add_entry(J, ro, rw, acc.oil.d[1]);
      add_entry(J, rw, ro, acc.water.d[0]);
      add_entry(J, rw, rw, acc.water.d[1]);
    }
  }

  SimState initial_state(double p0, double sw0) const {
    SimState s;
    s.p.assign(num_nodes(), p0);
    s.sw.assign(num_nodes(), sw0);
    for (std::size_t i = 0; i < num_nodes(); ++i) {
      if (fixed_[i]) {
        s.p[i] = fixed_[i]->p;
        s.sw[i] = fixed_[i]->sw;
      }
    }
    return s;
  }

 private:
  struct Link {
    std::size_t j;
    double coef;  // 1/d^2, doubled across a mirrored no-flow side
    PairParts parts;
  };

  void setup() {
    grid_.validate();
    model_.validate();
    if (model_.size() != grid_.size()) throw config_error("reservoir model size does not match the fdm grid");
    if (fixed_.empty()) fixed_.resize(grid_.size());
    if (fixed_.size() != grid_.size()) throw config_error("fixed-node list size does not match the fdm grid");
    const std::size_t nc = grid_.columns(), nr = grid_.rows();
    // Dirichlet sides pin their nodes; at corners a Dirichlet side wins.
    auto pin = [&](const FdmSideBC& bc, std::size_t id) {
      if (fixed_[id]) return;
      if (const auto* f = std::get_if<FixedValues>(&bc)) fixed_[id] = *f;
    };
    for (std::size_t j = 0; j < nr; ++j) {
      pin(sides_.left, grid_.index(0, j));
      pin(sides_.right, grid_.index(nc - 1, j));
    }
    for (std::size_t i = 0; i < nc; ++i) {
      pin(sides_.bottom, grid_.index(i, 0));
      pin(sides_.top, grid_.index(i, nr - 1));
    }
    links_.assign(grid_.size(), {});
    std::vector<std::pair<int, int>> entries;
    const double cx = 1.0 / (grid_.dx * grid_.dx);
    const double cy = 1.0 / (grid_.dy * grid_.dy);
    for (std::size_t j = 0; j < nr; ++j) {
      for (std::size_t i = 0; i < nc; ++i) {
        const std::size_t id = grid_.index(i, j);
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) entries.emplace_back(static_cast<int>(2 * id) + a, static_cast<int>(2 * id) + b);
        if (fixed_[id]) continue;
        auto link = [&](std::size_t nb, double coef) {
          links_[id].push_back({nb, coef, pair_transmissibility_parts(id, nb, model_)});
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              entries.emplace_back(static_cast<int>(2 * id) + a, static_cast<int>(2 * nb) + b);
        };
        // A free node on a boundary side is a no-flow node: the missing
        // neighbour is the mirror image of the inner one.
        if (i == 0) link(grid_.index(1, j), 2.0 * cx);
        else if (i == nc - 1) link(grid_.index(nc - 2, j), 2.0 * cx);
        else {
          link(grid_.index(i - 1, j), cx);
          link(grid_.index(i + 1, j), cx);
        }
        if (j == 0) link(grid_.index(i, 1), 2.0 * cy);
        else if (j == nr - 1) link(grid_.index(i, nr - 2), 2.0 * cy);
        else {
          link(grid_.index(i, j - 1), cy);
          link(grid_.index(i, j + 1), cy);
        }
      }
    }
    pattern_ = make_pattern(num_unknowns(), entries);
  }

  FdmGrid grid_;
  ReservoirModel model_;
  FdmSides sides_;
  std::vector<std::optional<FixedValues>> fixed_;
  std::vector<std::vector<Link>> links_;
  SparseMatrix pattern_;
};

inline Trajectory run_fdm(const FdmProblem& problem, double p0, double sw0, const TimeControl& tc,
                          std::vector<double> output_times = {}) {
  return simulate(problem, problem.initial_state(p0, sw0), tc, std::move(output_times));
}

/// ||u - u_ref||_2 / ||u_ref||_2
inline double relative_error(std::span<const double> u, std::span<const double> u_ref) {
  if (u.size() != u_ref.size()) throw config_error("relative_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    num += (u[i] - u_ref[i]) * (u[i] - u_ref[i]);
    den += u_ref[i] * u_ref[i];
  }
  if (den == 0.0) throw config_error("relative_error: reference has zero norm");
  return std::sqrt(num / den);
}

}  // namespace ugfdm
