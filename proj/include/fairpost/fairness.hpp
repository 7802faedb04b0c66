#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fairpost/errors.hpp"
#include "fairpost/grid.hpp"

namespace fairpost {

enum class FairnessVariant { LZ, ZDP, BorderZDP };

inline std::string variant_name(FairnessVariant v) {
  switch (v) {
    case FairnessVariant::LZ: return "lz";
    case FairnessVariant::ZDP: return "zdp";
    case FairnessVariant::BorderZDP: return "border";
  }
  return "?";
}

inline FairnessVariant variant_from_name(const std::string& s) {
  if (s == "lz") return FairnessVariant::LZ;
  if (s == "zdp") return FairnessVariant::ZDP;
  if (s == "border") return FairnessVariant::BorderZDP;
  throw validation_error("unknown fairness variant '" + s + "' (expected lz, zdp or border)");
}

/// One of the three constraint families.
///   LZ        — prescribed CDF levels at prescribed thresholds:
///               P_s(f <= z_m) = l_m for every group s.
///   ZDP       — each group's CDF matches the pooled CDF at the thresholds.
///   BorderZDP — pooled-CDF matching on an inner grid spanning (z_1, z_2),
///               plus prescribed levels (l_1, l_2) at the two borders.
struct FairnessSpec {
  FairnessVariant variant = FairnessVariant::LZ;
  std::vector<double> levels;      // LZ: size M; BorderZDP: size 2; ZDP: empty
  std::vector<double> thresholds;  // LZ/ZDP: size M; BorderZDP: the 2 borders
  int inner_size = 0;              // BorderZDP only: M inner thresholds

  /// Number of constraints per group.
  std::size_t constraint_count() const {
    return variant == FairnessVariant::BorderZDP ? thresholds.size() + static_cast<std::size_t>(inner_size)
                                                 : thresholds.size();
  }
};

inline FairnessSpec make_lz_spec(std::vector<double> levels, std::vector<double> thresholds) {
  FairnessSpec s;
  s.variant = FairnessVariant::LZ;
  s.levels = std::move(levels);
  s.thresholds = std::move(thresholds);
  return s;
}

inline FairnessSpec make_zdp_spec(std::vector<double> thresholds) {
  FairnessSpec s;
  s.variant = FairnessVariant::ZDP;
  s.thresholds = std::move(thresholds);
  return s;
}

inline FairnessSpec make_border_spec(double z_lo, double z_hi, double level_lo, double level_hi,
                                     int inner_size) {
  FairnessSpec s;
  s.variant = FairnessVariant::BorderZDP;
  s.thresholds = {z_lo, z_hi};
  s.levels = {level_lo, level_hi};
  s.inner_size = inner_size;
  return s;
}

/// BorderZDP inner thresholds: M points subdividing (z_1, z_2) regularly,
/// z_1 = t_0 < t_1 < ... < t_M < t_{M+1} = z_2.
inline std::vector<double> border_inner_thresholds(const FairnessSpec& spec) {
  std::vector<double> inner;
  inner.reserve(static_cast<std::size_t>(spec.inner_size));
  const double lo = spec.thresholds[0];
  const double hi = spec.thresholds[1];
  for (int j = 1; j <= spec.inner_size; ++j) {
    inner.push_back(lo + (hi - lo) * static_cast<double>(j) / (spec.inner_size + 1));
  }
  return inner;
}

/// Validates ordering/range invariants. Returns a list of non-fatal warnings
/// (currently: thresholds off the grid, which the constraint machinery
/// tolerates but which changes the effective threshold to the largest grid
/// point below).
inline std::vector<std::string> validate_spec(const FairnessSpec& spec, const Grid& grid) {
  auto strictly_increasing = [](const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!(v[i - 1] < v[i])) return false;
    }
    return true;
  };

  if (spec.thresholds.empty()) throw validation_error("fairness spec has no thresholds");
  if (!strictly_increasing(spec.thresholds)) {
    throw validation_error("thresholds must be strictly increasing");
  }
  for (double z : spec.thresholds) {
    if (z < -grid.bound || z > grid.bound) {
      throw validation_error("threshold " + std::to_string(z) + " outside [-A, A]");
    }
  }

  switch (spec.variant) {
    case FairnessVariant::LZ:
      if (spec.levels.size() != spec.thresholds.size()) {
        throw validation_error("levels/thresholds size mismatch");
      }
      if (!strictly_increasing(spec.levels)) {
        throw validation_error("levels must be strictly increasing");
      }
      for (double l : spec.levels) {
        if (!(l > 0.0 && l < 1.0)) throw validation_error("levels must lie in (0, 1)");
      }
      break;
    case FairnessVariant::ZDP:
      if (!spec.levels.empty()) throw validation_error("ZDP spec carries no levels");
      break;
    case FairnessVariant::BorderZDP:
      if (spec.thresholds.size() != 2 || spec.levels.size() != 2) {
        throw validation_error("border spec needs exactly two borders and two levels");
      }
      for (double l : spec.levels) {
        if (!(l > 0.0 && l < 1.0)) throw validation_error("levels must lie in (0, 1)");
      }
      if (spec.inner_size < 1) throw validation_error("border spec needs inner_size >= 1");
      break;
  }

  std::vector<std::string> warnings;
  auto on_grid = [&](double z) {
    const int k = snap_index(grid, z);
    return grid.points[static_cast<std::size_t>(k)] == z;
  };
  auto warn_off_grid = [&](double z) {
    if (!on_grid(z)) {
      warnings.push_back("threshold " + std::to_string(z) + " is not a grid point");
    }
  };
  for (double z : spec.thresholds) warn_off_grid(z);
  if (spec.variant == FairnessVariant::BorderZDP) {
    for (double z : border_inner_thresholds(spec)) warn_off_grid(z);
  }
  return warnings;
}

/// a(y) = (1{y <= z_1}, ..., 1{y <= z_M}).
inline std::vector<int> indicator_vector(double y, const std::vector<double>& thresholds) {
  std::vector<int> a(thresholds.size());
  for (std::size_t m = 0; m < thresholds.size(); ++m) a[m] = (y <= thresholds[m]) ? 1 : 0;
  return a;
}

/// b(y) = a(y) - levels.
inline std::vector<double> centered_indicator(double y, const std::vector<double>& thresholds,
                                              const std::vector<double>& levels) {
  if (thresholds.size() != levels.size()) {
    throw validation_error("centered_indicator: thresholds/levels size mismatch");
  }
  std::vector<double> b(thresholds.size());
  for (std::size_t m = 0; m < thresholds.size(); ++m) {
    b[m] = ((y <= thresholds[m]) ? 1.0 : 0.0) - levels[m];
  }
  return b;
}

// ---------------------------------------------------------------------------
// Unified constraint system
//
// All three families reduce to a single ascending threshold list where each
// column either carries a prescribed level (LZ and the borders of BorderZDP)
// or matches the pooled CDF (ZDP and the inner block of BorderZDP). Pooled
// columns have their multipliers constrained to sum to zero across groups.
// ---------------------------------------------------------------------------

struct ConstraintColumn {
  double threshold = 0.0;
  double level = 0.0;   // meaningful iff !pooled
  bool pooled = false;  // pooled-CDF target, Delta-projected multiplier column
};

struct ConstraintSystem {
  std::vector<ConstraintColumn> columns;  // ascending thresholds

  std::size_t size() const { return columns.size(); }
};

inline ConstraintSystem compile_spec(const FairnessSpec& spec) {
  ConstraintSystem sys;
  switch (spec.variant) {
    case FairnessVariant::LZ:
      for (std::size_t m = 0; m < spec.thresholds.size(); ++m) {
        sys.columns.push_back({spec.thresholds[m], spec.levels[m], false});
      }
      break;
    case FairnessVariant::ZDP:
      for (double z : spec.thresholds) sys.columns.push_back({z, 0.0, true});
      break;
    case FairnessVariant::BorderZDP: {
      sys.columns.push_back({spec.thresholds[0], spec.levels[0], false});
      for (double z : border_inner_thresholds(spec)) sys.columns.push_back({z, 0.0, true});
      sys.columns.push_back({spec.thresholds[1], spec.levels[1], false});
      break;
    }
  }
  return sys;
}

/// Lagrange multipliers, one row per group (rows follow the sorted group
/// label order of the calibration set), one column per constraint.
struct DualParams {
  std::size_t group_count = 0;
  std::size_t column_count = 0;
  std::vector<double> values;  // row-major, group_count x column_count

  DualParams() = default;
  DualParams(std::size_t groups, std::size_t columns)
      : group_count(groups), column_count(columns), values(groups * columns, 0.0) {}

  double& at(std::size_t s, std::size_t p) { return values[s * column_count + p]; }
  double at(std::size_t s, std::size_t p) const { return values[s * column_count + p]; }
};

/// Euclidean projection onto the zero-column-sum set, applied to pooled
/// columns only (LZ columns are unconstrained and pass through).
inline DualParams project_delta(DualParams lambda, const ConstraintSystem& sys) {
  for (std::size_t p = 0; p < sys.size(); ++p) {
    if (!sys.columns[p].pooled) continue;
    double mean = 0.0;
    for (std::size_t s = 0; s < lambda.group_count; ++s) mean += lambda.at(s, p);
    mean /= static_cast<double>(lambda.group_count);
    for (std::size_t s = 0; s < lambda.group_count; ++s) lambda.at(s, p) -= mean;
  }
  return lambda;
}

}  // namespace fairpost
