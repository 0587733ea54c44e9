#pragma once

// Rock/fluid relations for immiscible oil-water flow with zero capillary
// pressure. Units: m, day, MPa, mPa*s, mD.

#include <algorithm>
#include <string>
#include <vector>

#include "ugfdm/dual.hpp"
#include "ugfdm/error.hpp"

namespace ugfdm {

struct ReservoirModel {
  std::vector<double> k;      // permeability per node, mD
  std::vector<double> mu_o;   // mPa*s
  std::vector<double> mu_w;   // mPa*s
  std::vector<double> q_o;    // 1/day
  std::vector<double> q_w;    // 1/day
  double phi0 = 0.3;
  double cr = 0.0;            // 1/MPa
  double p_ref = 10.0;        // MPa
  double swc = 0.2;
  double sor = 0.2;
  double alpha = 0.0864;

  std::size_t size() const { return k.size(); }

  static ReservoirModel uniform(std::size_t n, double perm, double mu_oil, double mu_water) {
    ReservoirModel m;
    m.k.assign(n, perm);
    m.mu_o.assign(n, mu_oil);
    m.mu_w.assign(n, mu_water);
    m.q_o.assign(n, 0.0);
    m.q_w.assign(n, 0.0);
    return m;
  }

  /// Throws a config error listing every violated constraint.
  void validate() const {
    std::vector<std::string> problems;
    if (swc < 0.0 || sor < 0.0) problems.emplace_back("swc and sor must be non-negative");
    if (!(swc + sor < 1.0)) problems.emplace_back("swc + sor must be below 1");
    if (!(phi0 > 0.0 && phi0 < 1.0)) problems.emplace_back("phi0 must lie in (0, 1)");
    const std::size_t n = k.size();
    if (mu_o.size() != n || mu_w.size() != n || q_o.size() != n || q_w.size() != n) {
      problems.emplace_back("per-node arrays differ in length");
    }
    if (std::any_of(k.begin(), k.end(), [](double v) { return !(v > 0.0); })) {
      problems.emplace_back("permeability must be positive");
    }
    if (std::any_of(mu_o.begin(), mu_o.end(), [](double v) { return !(v > 0.0); }) ||
        std::any_of(mu_w.begin(), mu_w.end(), [](double v) { return !(v > 0.0); })) {
      problems.emplace_back("viscosities must be positive");
    }
    if (!problems.empty()) {
      std::string msg = "invalid reservoir model:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw config_error(msg);
    }
  }
};

struct SimState {
  std::vector<double> p;   // oil pressure, MPa
  std::vector<double> sw;  // water saturation
  double t = 0.0;          // days

  std::size_t size() const { return p.size(); }
};

namespace detail {
// Clamp by value; a clamped input carries zero derivative.
template <class T>
T clamp_saturation(const T& sw, double lo, double hi) {
  if (value_of(sw) < lo) return T(lo);
  if (value_of(sw) > hi) return T(hi);
  return sw;
}
}  // namespace detail

template <class T>
T krw(const T& sw, const ReservoirModel& m) {
  const double lo = m.swc, hi = 1.0 - m.sor;
  const T s = (detail::clamp_saturation(sw, lo, hi) - T(m.swc)) / T(hi - lo);
  return s * s;
}

template <class T>
T kro(const T& sw, const ReservoirModel& m) {
  const double lo = m.swc, hi = 1.0 - m.sor;
  const T s = (T(1.0 - m.sor) - detail::clamp_saturation(sw, lo, hi)) / T(hi - lo);
  return s * s;
}

template <class T>
T porosity(const T& p, const ReservoirModel& m) {
  const T phi = T(m.phi0) + T(m.cr) * (p - T(m.p_ref));
  if (!(value_of(phi) > 0.0 && value_of(phi) < 1.0)) {
    throw solver_error("unphysical porosity " + std::to_string(value_of(phi)) + " at p = " +
                       std::to_string(value_of(p)));
  }
  return phi;
}

struct PairParts {
  double k = 0.0;     // harmonic mean permeability
  double mu_o = 0.0;  // arithmetic mean viscosities
  double mu_w = 0.0;
};

inline PairParts pair_transmissibility_parts(std::size_t i, std::size_t j, const ReservoirModel& m) {
  return {2.0 / (1.0 / m.k[i] + 1.0 / m.k[j]), 0.5 * (m.mu_o[i] + m.mu_o[j]), 0.5 * (m.mu_w[i] + m.mu_w[j])};
}

template <class T>
struct Mobilities {
  T oil;
  T water;
};

/// Relative permeabilities taken from the higher-pressure node of the pair;
/// neighbour j wins ties.
template <class T>
Mobilities<T> upwind_mobilities(const T& p_i, const T& p_j, const T& sw_i, const T& sw_j, const PairParts& parts,
                                const ReservoirModel& m) {
  const T& up = value_of(p_j) >= value_of(p_i) ? sw_j : sw_i;
  return {kro(up, m) / T(parts.mu_o), krw(up, m) / T(parts.mu_w)};
}

}  // namespace ugfdm
