#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "fairpost/calibration.hpp"
#include "fairpost/errors.hpp"
#include "fairpost/fairness.hpp"
#include "fairpost/grid.hpp"

namespace fairpost {

// ---------------------------------------------------------------------------
// Deterministic reduction
// ---------------------------------------------------------------------------

/// Fixed-chunk pairwise summation: partial sums over 1024-element chunks are
/// combined in chunk order, so the result is independent of how the chunks
/// were produced (and therefore of any thread count).
inline double chunked_sum(const std::vector<double>& xs) {
  constexpr std::size_t kChunk = 1024;
  double total = 0.0;
  for (std::size_t begin = 0; begin < xs.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, xs.size());
    double part = 0.0;
    for (std::size_t i = begin; i < end; ++i) part += xs[i];
    total += part;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Pointwise kernel
//
// Every dual quantity reduces to the per-sample minimization
//     argmin_{y in grid} (y - score)^2 + pen_s(y) / pi_s
// where pen_s(y) = <lambda_s, a(y)> is the multiplier penalty. Dividing by
// pi_s instead of multiplying the quadratic keeps the lambda = 0 case exactly
// equal to plain nearest-point snapping. Ties always resolve to the smaller
// grid value; the same kernel drives the solver, the subgradient and the
// deployed predictor, which is what makes the solver's stationarity measure
// coincide with the audited unfairness.
// ---------------------------------------------------------------------------

/// Grid-side view of a constraint system: for each column, the largest grid
/// index whose point is <= the threshold, plus, per grid index, the first
/// column still covering it (for counting).
struct ConstraintGridIndex {
  std::vector<int> below_count;  // per column p: number of grid points <= threshold
  std::vector<int> first_column; // per grid index k: smallest p with k < below_count[p], or P

  std::size_t columns() const { return below_count.size(); }
};

inline ConstraintGridIndex index_constraints(const ConstraintSystem& sys, const Grid& grid) {
  ConstraintGridIndex idx;
  idx.below_count.reserve(sys.size());
  for (const auto& col : sys.columns) {
    const auto it = std::upper_bound(grid.points.begin(), grid.points.end(), col.threshold);
    idx.below_count.push_back(static_cast<int>(it - grid.points.begin()));
  }
  idx.first_column.assign(static_cast<std::size_t>(grid.size), static_cast<int>(sys.size()));
  for (int k = grid.size - 1; k >= 0; --k) {
    // below_count is non-decreasing; find first column with k < below_count[p]
    const auto it = std::upper_bound(idx.below_count.begin(), idx.below_count.end(), k);
    idx.first_column[static_cast<std::size_t>(k)] = static_cast<int>(it - idx.below_count.begin());
  }
  return idx;
}

/// Per-group penalty over the grid: pen[k] = sum_p lambda(s,p) * 1{y_k <= z_p},
/// built with a difference array so every caller accumulates identically.
/// `scaled` additionally divides by pi_s for use inside the argmin.
struct PenaltyTable {
  std::vector<double> raw;     // pen_s(y_k)
  std::vector<double> scaled;  // pen_s(y_k) / pi_s
};

inline PenaltyTable build_penalty_table(const ConstraintGridIndex& idx, const DualParams& lambda,
                                        std::size_t group, double weight, int grid_size) {
  std::vector<double> diff(static_cast<std::size_t>(grid_size) + 1, 0.0);
  for (std::size_t p = 0; p < idx.columns(); ++p) {
    const double v = lambda.at(group, p);
    diff[0] += v;
    diff[static_cast<std::size_t>(idx.below_count[p])] -= v;
  }
  PenaltyTable table;
  table.raw.resize(static_cast<std::size_t>(grid_size));
  table.scaled.resize(static_cast<std::size_t>(grid_size));
  double acc = 0.0;
  for (int k = 0; k < grid_size; ++k) {
    acc += diff[static_cast<std::size_t>(k)];
    table.raw[static_cast<std::size_t>(k)] = acc;
    table.scaled[static_cast<std::size_t>(k)] = acc / weight;
  }
  return table;
}

/// The shared argmin: first strictly-smallest objective wins, so ties land on
/// the smaller grid value.
inline int argmin_point(const Grid& grid, double score, const std::vector<double>& scaled_penalty) {
  int best = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.size; ++k) {
    const double d = grid.points[static_cast<std::size_t>(k)] - score;
    const double obj = d * d + scaled_penalty[static_cast<std::size_t>(k)];
    if (obj < best_obj) {
      best_obj = obj;
      best = k;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Dual objective, subgradient, violation
// ---------------------------------------------------------------------------

/// Per-sample dual score Phi_{s,lambda}(x, y) of the empirical dual: the
/// negated penalized squared distance, with the prescribed-level columns
/// entering through b(y) = a(y) - l and pooled columns through a(y).
inline double dual_score(const DualParams& lambda, double score, std::size_t group, double y,
                         const ConstraintSystem& sys, double weight) {
  double value = -weight * (y - score) * (y - score);
  for (std::size_t p = 0; p < sys.size(); ++p) {
    const double a = (y <= sys.columns[p].threshold) ? 1.0 : 0.0;
    const double b = sys.columns[p].pooled ? a : a - sys.columns[p].level;
    value -= lambda.at(group, p) * b;
  }
  return value;
}

/// Everything the solver needs from one pass over the calibration set.
struct DualEvaluation {
  double objective = 0.0;            // empirical dual H(lambda)
  std::vector<long> counts;          // S x P: #{i in I_s : y*_i <= z_p}
  DualParams subgradient;            // valid subgradient of H at lambda
  std::vector<double> violation_matrix;  // S x P empirical constraint violations
  double violation = 0.0;            // max over the matrix
};

inline void check_shapes(const DualParams& lambda, const CalibrationSet& calib,
                         const ConstraintSystem& sys) {
  if (lambda.group_count != calib.group_count() || lambda.column_count != sys.size()) {
    throw validation_error("dual parameters shaped " + std::to_string(lambda.group_count) + "x" +
                           std::to_string(lambda.column_count) + ", expected " +
                           std::to_string(calib.group_count()) + "x" + std::to_string(sys.size()));
  }
}

inline DualEvaluation evaluate_dual(const DualParams& lambda, const CalibrationSet& calib,
                                    const Grid& grid, const ConstraintSystem& sys,
                                    const ConstraintGridIndex& idx) {
  check_shapes(lambda, calib, sys);
  const std::size_t S = calib.group_count();
  const std::size_t P = sys.size();

  DualEvaluation ev;
  ev.counts.assign(S * P, 0);
  ev.subgradient = DualParams(S, P);
  ev.violation_matrix.assign(S * P, 0.0);

  double objective = 0.0;
  std::vector<long> histogram;       // per first-column bucket
  std::vector<double> contributions; // per-sample Phi values, chunk-summed
  for (std::size_t s = 0; s < S; ++s) {
    const PenaltyTable table = build_penalty_table(idx, lambda, s, calib.weights[s], grid.size);
    histogram.assign(P + 1, 0);
    contributions.clear();
    double level_constant = 0.0;  // <lambda_s, l> over prescribed-level columns
    for (std::size_t p = 0; p < P; ++p) {
      if (!sys.columns[p].pooled) level_constant += lambda.at(s, p) * sys.columns[p].level;
    }
    for (std::size_t i : calib.index_sets[s]) {
      const double score = calib.scores[i];
      const int k = argmin_point(grid, score, table.scaled);
      const double d = grid.points[static_cast<std::size_t>(k)] - score;
      contributions.push_back(-(calib.weights[s] * (d * d)) - table.raw[static_cast<std::size_t>(k)]);
      ++histogram[static_cast<std::size_t>(idx.first_column[static_cast<std::size_t>(k)])];
    }
    objective += chunked_sum(contributions) / static_cast<double>(calib.counts[s]) + level_constant;
    // prefix over the histogram: count of predictions <= z_p
    long below = 0;
    for (std::size_t p = 0; p < P; ++p) {
      below += histogram[p];
      ev.counts[s * P + p] = below;
    }
  }
  ev.objective = objective;

  for (std::size_t p = 0; p < P; ++p) {
    long pooled_count = 0;
    for (std::size_t s = 0; s < S; ++s) pooled_count += ev.counts[s * P + p];
    const double pooled_cdf =
        static_cast<double>(pooled_count) / static_cast<double>(calib.size());
    for (std::size_t s = 0; s < S; ++s) {
      const double cdf = static_cast<double>(ev.counts[s * P + p]) /
                         static_cast<double>(calib.counts[s]);
      if (sys.columns[p].pooled) {
        ev.subgradient.at(s, p) = -cdf;
        ev.violation_matrix[s * P + p] = std::abs(cdf - pooled_cdf);
      } else {
        ev.subgradient.at(s, p) = sys.columns[p].level - cdf;
        ev.violation_matrix[s * P + p] = std::abs(cdf - sys.columns[p].level);
      }
    }
  }
  ev.violation = 0.0;
  for (double v : ev.violation_matrix) ev.violation = std::max(ev.violation, v);
  return ev;
}

/// Empirical dual objective H(lambda) (sum over groups of the mean per-sample
/// maximum of Phi). O(N K) per call.
inline double dual_objective(const DualParams& lambda, const CalibrationSet& calib,
                             const Grid& grid, const FairnessSpec& spec) {
  const ConstraintSystem sys = compile_spec(spec);
  const ConstraintGridIndex idx = index_constraints(sys, grid);
  return evaluate_dual(lambda, calib, grid, sys, idx).objective;
}

/// A subgradient of H at lambda; argmax ties inside follow the global
/// smallest-grid-value rule.
inline DualParams dual_subgradient(const DualParams& lambda, const CalibrationSet& calib,
                                   const Grid& grid, const FairnessSpec& spec) {
  const ConstraintSystem sys = compile_spec(spec);
  const ConstraintGridIndex idx = index_constraints(sys, grid);
  return evaluate_dual(lambda, calib, grid, sys, idx).subgradient;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct SolverOptions {
  int max_iters = 2000;
  double c0 = 0.0;        // step scale for c0/sqrt(t); <= 0 selects the grid bound A
  double tol = 1e-2;      // stop once the max empirical violation is below this
  int refine_passes = 2;  // deterministic per-threshold refinement after the loop
};

struct SolveResult {
  DualParams lambda;              // best-violation iterate
  double violation = 0.0;         // at that iterate
  std::vector<double> violation_matrix;
  double objective = 0.0;
  int iterations = 0;             // subgradient iterations executed
  int best_iteration = 0;
  bool converged = false;
  std::vector<double> trace_violation;
  std::vector<double> trace_objective;
};

namespace detail {

/// One refinement pass: for each constraint column in turn, compute the exact
/// multiplier values at which each sample's argmin crosses the threshold and
/// re-set the column so the below-threshold counts hit their targets (the
/// prescribed level, or for pooled columns a common fraction chosen by
/// bisection inside the zero-sum set). Candidates are re-evaluated through
/// the shared kernel, so only genuinely better iterates survive.
inline void refine_columns(DualParams& lambda, const CalibrationSet& calib, const Grid& grid,
                           const ConstraintSystem& sys, const ConstraintGridIndex& idx) {
  const std::size_t S = calib.group_count();
  const std::size_t P = sys.size();
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> flips(S);
  for (std::size_t p = 0; p < P; ++p) {
    const int boundary = idx.below_count[p];  // grid points [0, boundary) are <= z_p
    if (boundary <= 0 || boundary >= grid.size) continue;  // constraint cannot bind
    // Flip value per sample: largest column multiplier (scaled by pi_s) for
    // which the sample still predicts <= z_p, holding all other columns fixed.
    for (std::size_t s = 0; s < S; ++s) {
      PenaltyTable table = build_penalty_table(idx, lambda, s, calib.weights[s], grid.size);
      const double current = lambda.at(s, p) / calib.weights[s];
      flips[s].clear();
      for (std::size_t i : calib.index_sets[s]) {
        const double score = calib.scores[i];
        double best_below = inf, best_above = inf;
        for (int k = 0; k < grid.size; ++k) {
          const double d = grid.points[static_cast<std::size_t>(k)] - score;
          // column p's contribution removed below the threshold
          const double obj = d * d + table.scaled[static_cast<std::size_t>(k)] -
                             (k < boundary ? current : 0.0);
          if (k < boundary) {
            best_below = std::min(best_below, obj);
          } else {
            best_above = std::min(best_above, obj);
          }
        }
        flips[s].push_back(calib.weights[s] * (best_above - best_below));
      }
      std::sort(flips[s].begin(), flips[s].end(), std::greater<double>());
    }

    // Multiplier that makes exactly `target` samples of group s sit below:
    // anything in (flip[target], flip[target-1]]; use the midpoint.
    auto lambda_for_count = [&](std::size_t s, long target) {
      const auto& f = flips[s];
      const long n = static_cast<long>(f.size());
      if (target <= 0) return f.front() + 1.0;
      if (target >= n) return f.back();
      const double hi = f[static_cast<std::size_t>(target - 1)];
      const double lo = f[static_cast<std::size_t>(target)];
      return lo + 0.5 * (hi - lo);
    };

    if (!sys.columns[p].pooled) {
      for (std::size_t s = 0; s < S; ++s) {
        const double ns = static_cast<double>(calib.counts[s]);
        const long target = std::lround(sys.columns[p].level * ns);
        lambda.at(s, p) = lambda_for_count(s, target);
      }
    } else {
      // Common fraction tau for all groups such that the per-group
      // multipliers sum to zero; their sum is monotone in tau.
      auto column_sum = [&](double tau) {
        double sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
          sum += lambda_for_count(s, std::lround(tau * static_cast<double>(calib.counts[s])));
        }
        return sum;
      };
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (column_sum(mid) > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double tau = 0.5 * (lo + hi);
      double mean = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        lambda.at(s, p) =
            lambda_for_count(s, std::lround(tau * static_cast<double>(calib.counts[s])));
        mean += lambda.at(s, p);
      }
      mean /= static_cast<double>(S);
      for (std::size_t s = 0; s < S; ++s) lambda.at(s, p) -= mean;
    }
  }
}

}  // namespace detail

/// Projected subgradient descent on the empirical dual from lambda = 0 with
/// step c0/sqrt(t), tracking the iterate with the smallest empirical
/// constraint violation. Optional refinement passes afterwards snap each
/// threshold's multipliers to exact crossing points, which resolves the
/// granularity left by atomic base scores. Returns the best iterateseen;
/// non-convergence is reported through `converged`, never as an error.
inline SolveResult solve_dual(const CalibrationSet& calib, const Grid& grid,
                              const FairnessSpec& spec, const SolverOptions& opts) {
  if (opts.max_iters < 1) throw validation_error("solver needs max_iters >= 1");
  if (!(opts.tol > 0.0)) throw validation_error("solver tolerance must be positive");
  if (calib.size() == 0) throw validation_error("empty calibration set");

  const ConstraintSystem sys = compile_spec(spec);
  const ConstraintGridIndex idx = index_constraints(sys, grid);
  const std::size_t S = calib.group_count();
  const std::size_t P = sys.size();
  const double c0 = opts.c0 > 0.0 ? opts.c0 : grid.bound;

  DualParams lambda(S, P);
  SolveResult result;
  result.lambda = lambda;
  result.violation = std::numeric_limits<double>::infinity();

  auto consider = [&](const DualParams& cand, const DualEvaluation& ev, int iteration) {
    if (ev.violation < result.violation) {
      result.lambda = cand;
      result.violation = ev.violation;
      result.violation_matrix = ev.violation_matrix;
      result.objective = ev.objective;
      result.best_iteration = iteration;
    }
  };

  int t = 1;
  for (; t <= opts.max_iters; ++t) {
    const DualEvaluation ev = evaluate_dual(lambda, calib, grid, sys, idx);
    result.trace_violation.push_back(ev.violation);
    result.trace_objective.push_back(ev.objective);
    consider(lambda, ev, t);
    result.iterations = t;
    if (result.violation <= opts.tol) break;

    const double step = c0 / std::sqrt(static_cast<double>(t));
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t p = 0; p < P; ++p) {
        lambda.at(s, p) -= step * ev.subgradient.at(s, p);
      }
    }
    lambda = project_delta(std::move(lambda), sys);
  }

  for (int pass = 0; pass < opts.refine_passes && result.violation > opts.tol; ++pass) {
    DualParams cand = result.lambda;
    detail::refine_columns(cand, calib, grid, sys, idx);
    const DualEvaluation ev = evaluate_dual(cand, calib, grid, sys, idx);
    consider(cand, ev, result.iterations);
  }

  result.converged = result.violation <= opts.tol;
  return result;
}

}  // namespace fairpost
