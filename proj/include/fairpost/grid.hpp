#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fairpost/errors.hpp"

namespace fairpost {

/// Regular grid of K output values spanning [-bound, bound]. Fair predictors
/// always map into these points.
struct Grid {
  double bound = 0.0;              // A
  int size = 0;                    // K
  std::vector<double> points;      // ascending, points.front() == -A, back() == A

  double spacing() const { return 2.0 * bound / (size - 1); }
};

inline Grid make_grid(double bound, int size) {
  if (!(bound > 0.0)) {
    throw validation_error("grid bound must be positive, got " + std::to_string(bound));
  }
  if (size < 2) {
    throw validation_error("grid size must be at least 2, got " + std::to_string(size));
  }
  Grid g;
  g.bound = bound;
  g.size = size;
  g.points.resize(static_cast<std::size_t>(size));
  for (int k = 0; k < size; ++k) {
    g.points[static_cast<std::size_t>(k)] =
        -bound + 2.0 * bound * static_cast<double>(k) / (size - 1);
  }
  // endpoints pinned exactly
  g.points.front() = -bound;
  g.points.back() = bound;
  return g;
}

/// Index of the grid point nearest to y; exact midpoints round to the smaller
/// point. Matches the tie rule of the fair predictor's argmin.
inline int snap_index(const Grid& grid, double y) {
  if (y < -grid.bound || y > grid.bound) {
    throw validation_error("snap_to_grid: value " + std::to_string(y) +
                           " outside [-A, A]; clip before snapping");
  }
  const double h = grid.spacing();
  int lo = static_cast<int>(std::floor((y + grid.bound) / h));
  if (lo < 0) lo = 0;
  if (lo >= grid.size - 1) lo = grid.size - 2;
  const double dlo = y - grid.points[static_cast<std::size_t>(lo)];
  const double dhi = grid.points[static_cast<std::size_t>(lo) + 1] - y;
  return (dlo * dlo <= dhi * dhi) ? lo : lo + 1;
}

inline double snap_to_grid(const Grid& grid, double y) {
  return grid.points[static_cast<std::size_t>(snap_index(grid, y))];
}

inline double clip(double y, double bound) {
  if (y < -bound) return -bound;
  if (y > bound) return bound;
  return y;
}

}  // namespace fairpost
