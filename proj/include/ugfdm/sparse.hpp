#pragma once

#include <algorithm>
#include <cassert>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "ugfdm/error.hpp"

namespace ugfdm {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Compressed matrix whose structure was fixed at setup; every entry is
/// stored even when its value is zero.
inline SparseMatrix make_pattern(std::size_t n, const std::vector<std::pair<int, int>>& entries) {
  std::vector<Eigen::Triplet<double, int>> trips;
  trips.reserve(entries.size());
  for (auto [r, c] : entries) trips.emplace_back(r, c, 0.0);
  SparseMatrix m(static_cast<int>(n), static_cast<int>(n));
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

inline void zero_values(SparseMatrix& m) { std::fill(m.valuePtr(), m.valuePtr() + m.nonZeros(), 0.0); }

/// Accumulates into an existing structural entry; a missing entry is a
/// programming error.
inline void add_entry(SparseMatrix& m, int row, int col, double v) {
  const int* begin = m.innerIndexPtr() + m.outerIndexPtr()[col];
  const int* end = m.innerIndexPtr() + m.outerIndexPtr()[col + 1];
  const int* it = std::lower_bound(begin, end, row);
  assert(it != end && *it == row && "jacobian entry outside the assembled pattern");
  if (it == end || *it != row) {
    throw solver_error("jacobian entry (" + std::to_string(row) + "," + std::to_string(col) + ") outside pattern");
  }
  m.valuePtr()[it - m.innerIndexPtr()] += v;
}

}  // namespace ugfdm
