#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairpost/calibration.hpp"
#include "fairpost/data.hpp"
#include "fairpost/dual.hpp"
#include "fairpost/fairness.hpp"
#include "fairpost/grid.hpp"
#include "fairpost/metrics.hpp"
#include "fairpost/predictor.hpp"
#include "fairpost/tree.hpp"

namespace fairpost {

// ---------------------------------------------------------------------------
// Threshold prescriptions
// ---------------------------------------------------------------------------

/// Lower empirical quantile: smallest value whose empirical CDF reaches l.
inline double lower_quantile(const std::vector<double>& sorted_values, double level) {
  const std::size_t n = sorted_values.size();
  if (n == 0) throw validation_error("lower_quantile: empty sample");
  double r = std::ceil(level * static_cast<double>(n));
  if (r < 1.0) r = 1.0;
  std::size_t idx = static_cast<std::size_t>(r) - 1;
  if (idx >= n) idx = n - 1;
  return sorted_values[idx];
}

struct Prescription {
  enum class Mode { Global, TargetGroup, Explicit };
  Mode mode = Mode::Global;
  std::string target_group;                     // TargetGroup mode
  std::vector<double> levels = {0.25, 0.5, 0.75};
  std::vector<double> explicit_thresholds;      // Explicit mode
  FairnessVariant variant = FairnessVariant::LZ;  // LZ or ZDP
};

/// Thresholds from calibration scores: pooled quantiles (Global), one
/// group's quantiles (TargetGroup), or user-specified values (Explicit).
/// LZ keeps the levels as targets; ZDP keeps only the thresholds.
inline FairnessSpec prescribe_thresholds(const std::vector<double>& scores,
                                         const std::vector<std::string>& labels,
                                         const Prescription& prescription) {
  if (prescription.variant == FairnessVariant::BorderZDP) {
    throw validation_error("prescribe_thresholds handles lz/zdp; use make_border_spec");
  }
  std::vector<double> thresholds;
  if (prescription.mode == Prescription::Mode::Explicit) {
    thresholds = prescription.explicit_thresholds;
  } else {
    if (scores.empty()) throw validation_error("prescribe_thresholds: no calibration scores");
    std::vector<double> pool;
    if (prescription.mode == Prescription::Mode::Global) {
      pool = scores;
    } else {
      if (labels.size() != scores.size()) {
        throw validation_error("prescribe_thresholds: scores/labels length mismatch");
      }
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == prescription.target_group) pool.push_back(scores[i]);
      }
      if (pool.empty()) {
        throw validation_error("target group '" + prescription.target_group +
                               "' has no calibration scores");
      }
    }
    std::sort(pool.begin(), pool.end());
    for (double l : prescription.levels) thresholds.push_back(lower_quantile(pool, l));
  }
  for (std::size_t m = 1; m < thresholds.size(); ++m) {
    if (!(thresholds[m - 1] < thresholds[m])) {
      throw validation_error(
          "prescribed thresholds are not strictly increasing (duplicate quantiles); "
          "dither the scores or use fewer levels");
    }
  }
  if (prescription.variant == FairnessVariant::LZ) {
    return make_lz_spec(prescription.levels, thresholds);
  }
  return make_zdp_spec(thresholds);
}

/// Border spec with borders at pooled quantiles of the calibration scores.
inline FairnessSpec prescribe_border(const std::vector<double>& scores, double level_lo,
                                     double level_hi, int inner_size) {
  std::vector<double> pool(scores);
  std::sort(pool.begin(), pool.end());
  const double z_lo = lower_quantile(pool, level_lo);
  const double z_hi = lower_quantile(pool, level_hi);
  if (!(z_lo < z_hi)) {
    throw validation_error("border quantiles coincide; dither the scores or widen the levels");
  }
  return make_border_spec(z_lo, z_hi, level_lo, level_hi, inner_size);
}

/// ZDP thresholds at all interior grid points: full distributional parity on
/// the discretized output (strong DP).
inline FairnessSpec strong_dp_spec(const Grid& grid) {
  std::vector<double> thresholds(grid.points.begin() + 1, grid.points.end() - 1);
  return make_zdp_spec(thresholds);
}

// ---------------------------------------------------------------------------
// Protocol runner
// ---------------------------------------------------------------------------

struct MethodSpec {
  enum class Kind { Unconstrained, LZ, ZDP, Border, StrongDP };
  Kind kind = Kind::LZ;
  Prescription prescription;  // LZ modes
  int zdp_m = 3;              // ZDP: thresholds at levels j/(M+1)
  double border_level_lo = 0.25;
  double border_level_hi = 0.75;
  int border_inner = 9;

  std::string name() const {
    switch (kind) {
      case Kind::Unconstrained: return "unconstrained";
      case Kind::LZ:
        switch (prescription.mode) {
          case Prescription::Mode::Global: return "lz-global";
          case Prescription::Mode::TargetGroup: return "lz-target-" + prescription.target_group;
          case Prescription::Mode::Explicit: return "lz-explicit";
        }
        return "lz";
      case Kind::ZDP: return "zdp";
      case Kind::Border: return "zdp-range";
      case Kind::StrongDP: return "strong-dp";
    }
    return "?";
  }

  std::string scope() const {
    switch (kind) {
      case Kind::Unconstrained: return "none";
      case Kind::LZ: return "M=" + std::to_string(prescription.levels.size());
      case Kind::ZDP: return "M=" + std::to_string(zdp_m);
      case Kind::Border: return "range+" + std::to_string(border_inner);
      case Kind::StrongDP: return "full-grid";
    }
    return "?";
  }
};

struct ProtocolConfig {
  SyntheticConfig synth;       // seed field is overwritten per run seed
  double grid_bound = 100.0;
  int grid_size = 201;
  double dither_width = 1e-4;
  TreeOptions tree;
  SolverOptions solver;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

struct SweepPoint {
  std::string method;
  std::string scope;
  std::uint64_t seed = 0;
  EvaluationReport report;
  double calibration_violation = 0.0;
  int solver_iterations = 0;
  bool converged = true;
};

namespace detail {

/// One seed's shared state: split, group-aware tree, clipped scores (dithered
/// on the calibration side only), test labels.
struct SeedState {
  std::vector<std::string> group_levels;  // sorted
  std::vector<double> cal_scores;
  std::vector<std::string> cal_groups;
  std::vector<double> test_scores;
  std::vector<std::string> test_groups;
  std::vector<double> test_targets;
};

inline std::vector<double> encode_features(const std::vector<double>& x, const std::string& group,
                                           const std::vector<std::string>& levels) {
  std::vector<double> out(x);
  const auto it = std::lower_bound(levels.begin(), levels.end(), group);
  if (it == levels.end() || *it != group) {
    throw validation_error("unknown group '" + group + "' in feature encoding");
  }
  out.push_back(static_cast<double>(it - levels.begin()));
  return out;
}

inline SeedState prepare_seed(const ProtocolConfig& cfg, std::uint64_t seed,
                              const Dataset* external = nullptr) {
  SyntheticConfig synth = cfg.synth;
  synth.seed = seed;
  synth.bound = cfg.grid_bound;
  const Dataset data = external ? *external : generate_synthetic(synth);

  SplitConfig split_cfg;
  split_cfg.seed = seed;
  const SplitResult parts = split(data, split_cfg);

  SeedState st;
  {
    std::set<std::string> groups;
    for (const auto& s : data.samples) groups.insert(s.group);
    st.group_levels.assign(groups.begin(), groups.end());
  }

  std::vector<std::vector<double>> train_x;
  std::vector<double> train_y;
  train_x.reserve(parts.train.size());
  for (const auto& s : parts.train.samples) {
    train_x.push_back(encode_features(s.x, s.group, st.group_levels));
    train_y.push_back(s.y);
  }
  const RegressionTree tree = fit_tree(train_x, train_y, cfg.tree);

  const double A = cfg.grid_bound;
  std::vector<double> raw;
  raw.reserve(parts.calibration.size());
  for (std::size_t i = 0; i < parts.calibration.size(); ++i) {
    raw.push_back(clip(
        predict_tree(tree, encode_features(parts.calibration.x[i], parts.calibration.groups[i],
                                           st.group_levels)),
        A));
  }
  DitherConfig dither_cfg{cfg.dither_width, seed};
  st.cal_scores = dither_scores(raw, dither_cfg, A);
  st.cal_groups = parts.calibration.groups;

  for (const auto& s : parts.test.samples) {
    st.test_scores.push_back(clip(predict_tree(tree, encode_features(s.x, s.group, st.group_levels)), A));
    st.test_groups.push_back(s.group);
    st.test_targets.push_back(s.y);
  }
  return st;
}

inline FairnessSpec spec_for_method(const MethodSpec& method, const SeedState& st,
                                    const Grid& grid) {
  switch (method.kind) {
    case MethodSpec::Kind::Unconstrained: {
      // evaluation reference only: quartile LZ prescription on the pooled scores
      Prescription p;
      return prescribe_thresholds(st.cal_scores, st.cal_groups, p);
    }
    case MethodSpec::Kind::LZ:
      return prescribe_thresholds(st.cal_scores, st.cal_groups, method.prescription);
    case MethodSpec::Kind::ZDP: {
      Prescription p;
      p.variant = FairnessVariant::ZDP;
      p.levels.clear();
      for (int j = 1; j <= method.zdp_m; ++j) {
        p.levels.push_back(static_cast<double>(j) / (method.zdp_m + 1));
      }
      return prescribe_thresholds(st.cal_scores, st.cal_groups, p);
    }
    case MethodSpec::Kind::Border:
      return prescribe_border(st.cal_scores, method.border_level_lo, method.border_level_hi,
                              method.border_inner);
    case MethodSpec::Kind::StrongDP: return strong_dp_spec(grid);
  }
  throw validation_error("unreachable method kind");
}

}  // namespace detail

/// Run each (method, seed) cell: split, train the base tree, dither and
/// calibrate, then evaluate on the held-out test part. Deterministic given
/// (config, seed); cells are independent.
inline std::vector<SweepPoint> run_protocol(const ProtocolConfig& cfg,
                                            const std::vector<MethodSpec>& methods,
                                            const Dataset* external_data = nullptr) {
  std::vector<SweepPoint> points;
  const Grid grid = make_grid(cfg.grid_bound, cfg.grid_size);
  for (std::uint64_t seed : cfg.seeds) {
    const detail::SeedState st = detail::prepare_seed(cfg, seed, external_data);
    for (const MethodSpec& method : methods) {
      const FairnessSpec spec = detail::spec_for_method(method, st, grid);
      SweepPoint point;
      point.method = method.name();
      point.scope = method.scope();
      point.seed = seed;
      if (method.kind == MethodSpec::Kind::Unconstrained) {
        point.report = evaluate_predictions(st.test_scores, st.test_scores, st.test_groups, spec,
                                            st.test_targets);
        point.calibration_violation = 0.0;
        point.converged = true;
      } else {
        const CalibrationSet calib = make_calibration_set(st.cal_scores, st.cal_groups);
        const SolveResult solved = solve_dual(calib, grid, spec, cfg.solver);
        FairPredictor pred;
        pred.grid = grid;
        pred.spec = spec;
        pred.groups = calib.groups;
        pred.weights = calib.weights;
        pred.lambda = solved.lambda;
        const std::vector<double> fair =
            predict_fair_many(pred, st.test_scores, st.test_groups);
        point.report =
            evaluate_predictions(fair, st.test_scores, st.test_groups, spec, st.test_targets);
        point.calibration_violation = solved.violation;
        point.solver_iterations = solved.iterations;
        point.converged = solved.converged;
      }
      points.push_back(std::move(point));
    }
  }
  return points;
}

/// Fairness-accuracy sweep over constraint globality: ZDP at each requested
/// M plus full-grid strong DP.
inline std::vector<SweepPoint> sweep_globality(const ProtocolConfig& cfg,
                                               const std::vector<int>& m_values,
                                               bool include_unconstrained = false) {
  std::vector<MethodSpec> methods;
  if (include_unconstrained) {
    MethodSpec u;
    u.kind = MethodSpec::Kind::Unconstrained;
    methods.push_back(u);
  }
  for (int m : m_values) {
    MethodSpec z;
    z.kind = MethodSpec::Kind::ZDP;
    z.zdp_m = m;
    methods.push_back(z);
  }
  MethodSpec strong;
  strong.kind = MethodSpec::Kind::StrongDP;
  methods.push_back(strong);
  return run_protocol(cfg, methods);
}

// ---------------------------------------------------------------------------
// Aggregation and output
// ---------------------------------------------------------------------------

struct SweepSummaryRow {
  std::string method;
  std::string scope;
  std::size_t runs = 0;
  double rmse_mean = 0.0, rmse_sd = 0.0;
  double u_mean = 0.0, u_sd = 0.0;
  double ks_mean = 0.0, ks_sd = 0.0;
  double risk_mean = 0.0, risk_sd = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace detail

inline std::vector<SweepSummaryRow> aggregate_sweep(const std::vector<SweepPoint>& points) {
  std::map<std::pair<std::string, std::string>, std::vector<const SweepPoint*>> cells;
  for (const auto& p : points) cells[{p.method, p.scope}].push_back(&p);
  std::vector<SweepSummaryRow> rows;
  for (const auto& [key, cell] : cells) {
    SweepSummaryRow row;
    row.method = key.first;
    row.scope = key.second;
    row.runs = cell.size();
    std::vector<double> rmse, u, ks, risk;
    for (const SweepPoint* p : cell) {
      rmse.push_back(p->report.rmse_price);
      u.push_back(p->report.violations.max_violation);
      ks.push_back(p->report.ks);
      risk.push_back(p->report.risk);
    }
    std::tie(row.rmse_mean, row.rmse_sd) = detail::mean_sd(rmse);
    std::tie(row.u_mean, row.u_sd) = detail::mean_sd(u);
    std::tie(row.ks_mean, row.ks_sd) = detail::mean_sd(ks);
    std::tie(row.risk_mean, row.risk_sd) = detail::mean_sd(risk);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::vector<const SweepPoint*> ordered;
  for (const auto& p : points) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(), [](const SweepPoint* a, const SweepPoint* b) {
    if (a->method != b->method) return a->method < b->method;
    if (a->scope != b->scope) return a->scope < b->scope;
    return a->seed < b->seed;
  });
  std::ostringstream out;
  out << "variant,M_or_range,seed,rmse_price,U,ks,risk_mse\n";
  for (const SweepPoint* p : ordered) {
    out << p->method << "," << p->scope << "," << p->seed << ","
        << detail::format_double(p->report.rmse_price) << ","
        << detail::format_double(p->report.violations.max_violation) << ","
        << detail::format_double(p->report.ks) << ","
        << detail::format_double(p->report.risk) << "\n";
  }
  return out.str();
}

inline nlohmann::json sweep_summary_json(const std::vector<SweepPoint>& points) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : aggregate_sweep(points)) {
    rows.push_back({{"variant", row.method},
                    {"M_or_range", row.scope},
                    {"runs", row.runs},
                    {"rmse_price", {{"mean", row.rmse_mean}, {"sd", row.rmse_sd}}},
                    {"U", {{"mean", row.u_mean}, {"sd", row.u_sd}}},
                    {"ks", {{"mean", row.ks_mean}, {"sd", row.ks_sd}}},
                    {"risk_mse", {{"mean", row.risk_mean}, {"sd", row.risk_sd}}}});
  }
  return nlohmann::json{{"rows", rows}};
}

}  // namespace fairpost
