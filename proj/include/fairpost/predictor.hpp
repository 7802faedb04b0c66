#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairpost/calibration.hpp"
#include "fairpost/dual.hpp"
#include "fairpost/errors.hpp"
#include "fairpost/fairness.hpp"
#include "fairpost/grid.hpp"
#include "fairpost/io.hpp"

namespace fairpost {

/// Frozen post-processing artifact: grid, constraint spec, fitted
/// multipliers, group weights and dither config, plus solver provenance.
/// Maps (base score, group) to a grid value.
struct FairPredictor {
  Grid grid;
  FairnessSpec spec;
  std::vector<std::string> groups;  // sorted label order; lambda rows follow it
  std::vector<double> weights;      // pi_s
  DualParams lambda;
  DitherConfig dither;
  bool dither_at_predict = false;

  // provenance
  int iterations = 0;
  double final_violation = 0.0;
  bool converged = true;
  std::uint64_t seed = 0;

  int group_index(const std::string& label) const {
    auto it = std::lower_bound(groups.begin(), groups.end(), label);
    if (it == groups.end() || *it != label) {
      throw validation_error("unknown group '" + label + "' (predictor was calibrated without it)");
    }
    return static_cast<int>(it - groups.begin());
  }
};

/// Calibrate a fair predictor on a prepared (dithered) calibration set.
inline std::pair<FairPredictor, SolveResult> calibrate(const CalibrationSet& calib,
                                                       const Grid& grid, const FairnessSpec& spec,
                                                       const SolverOptions& opts,
                                                       const DitherConfig& dither_cfg = {}) {
  SolveResult solve = solve_dual(calib, grid, spec, opts);
  FairPredictor pred;
  pred.grid = grid;
  pred.spec = spec;
  pred.groups = calib.groups;
  pred.weights = calib.weights;
  pred.lambda = solve.lambda;
  pred.dither = dither_cfg;
  pred.iterations = solve.iterations;
  pred.final_violation = solve.violation;
  pred.converged = solve.converged;
  pred.seed = dither_cfg.seed;
  return {std::move(pred), std::move(solve)};
}

/// Pointwise fair prediction: exact minimizer over the grid of the penalized
/// squared distance, ties to the smaller grid value. The caller clips the
/// score into [-A, A] first.
inline double predict_fair(const FairPredictor& pred, double score, const std::string& group) {
  const int s = pred.group_index(group);
  if (score < -pred.grid.bound || score > pred.grid.bound) {
    throw validation_error("score outside [-A, A]; clip before prediction");
  }
  const ConstraintSystem sys = compile_spec(pred.spec);
  const ConstraintGridIndex idx = index_constraints(sys, pred.grid);
  const PenaltyTable table = build_penalty_table(idx, pred.lambda, static_cast<std::size_t>(s),
                                                 pred.weights[static_cast<std::size_t>(s)],
                                                 pred.grid.size);
  const int k = argmin_point(pred.grid, score, table.scaled);
  return pred.grid.points[static_cast<std::size_t>(k)];
}

/// Bulk prediction; builds each group's penalty table once.
inline std::vector<double> predict_fair_many(const FairPredictor& pred,
                                             const std::vector<double>& scores,
                                             const std::vector<std::string>& labels) {
  if (scores.size() != labels.size()) {
    throw validation_error("predict_fair_many: scores/labels length mismatch");
  }
  const ConstraintSystem sys = compile_spec(pred.spec);
  const ConstraintGridIndex idx = index_constraints(sys, pred.grid);
  std::vector<PenaltyTable> tables;
  tables.reserve(pred.groups.size());
  for (std::size_t s = 0; s < pred.groups.size(); ++s) {
    tables.push_back(
        build_penalty_table(idx, pred.lambda, s, pred.weights[s], pred.grid.size));
  }
  std::vector<double> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int s = pred.group_index(labels[i]);
    if (scores[i] < -pred.grid.bound || scores[i] > pred.grid.bound) {
      throw validation_error("score outside [-A, A] at row " + std::to_string(i));
    }
    const int k = argmin_point(pred.grid, scores[i], tables[static_cast<std::size_t>(s)].scaled);
    out.push_back(pred.grid.points[static_cast<std::size_t>(k)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (JSON; doubles round-trip exactly)
// ---------------------------------------------------------------------------

inline nlohmann::json predictor_to_json(const FairPredictor& pred) {
  nlohmann::json spec_json{{"variant", variant_name(pred.spec.variant)},
                           {"levels", pred.spec.levels},
                           {"thresholds", pred.spec.thresholds}};
  if (pred.spec.variant == FairnessVariant::BorderZDP) {
    spec_json["inner_size"] = pred.spec.inner_size;
  }
  std::vector<std::vector<double>> lambda_rows;
  for (std::size_t s = 0; s < pred.lambda.group_count; ++s) {
    std::vector<double> row;
    for (std::size_t p = 0; p < pred.lambda.column_count; ++p) row.push_back(pred.lambda.at(s, p));
    lambda_rows.push_back(std::move(row));
  }
  return nlohmann::json{
      {"format", "fairpost.predictor.v1"},
      {"grid", {{"bound", pred.grid.bound}, {"size", pred.grid.size}}},
      {"spec", spec_json},
      {"groups", pred.groups},
      {"weights", pred.weights},
      {"lambda", lambda_rows},
      {"dither", {{"width", pred.dither.width}, {"seed", pred.dither.seed}}},
      {"dither_at_predict", pred.dither_at_predict},
      {"provenance",
       {{"iterations", pred.iterations},
        {"final_violation", pred.final_violation},
        {"converged", pred.converged},
        {"seed", pred.seed}}}};
}

inline FairPredictor predictor_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format") != "fairpost.predictor.v1") {
    throw io_error("not a fairpost predictor file (missing or wrong 'format')");
  }
  FairPredictor pred;
  pred.grid = make_grid(j.at("grid").at("bound").get<double>(), j.at("grid").at("size").get<int>());
  const auto& js = j.at("spec");
  pred.spec.variant = variant_from_name(js.at("variant").get<std::string>());
  pred.spec.levels = js.at("levels").get<std::vector<double>>();
  pred.spec.thresholds = js.at("thresholds").get<std::vector<double>>();
  if (pred.spec.variant == FairnessVariant::BorderZDP) {
    pred.spec.inner_size = js.at("inner_size").get<int>();
  }
  pred.groups = j.at("groups").get<std::vector<std::string>>();
  pred.weights = j.at("weights").get<std::vector<double>>();
  const auto rows = j.at("lambda").get<std::vector<std::vector<double>>>();
  const ConstraintSystem sys = compile_spec(pred.spec);
  pred.lambda = DualParams(pred.groups.size(), sys.size());
  if (rows.size() != pred.groups.size()) throw io_error("lambda row count mismatch");
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (rows[s].size() != sys.size()) throw io_error("lambda column count mismatch");
    for (std::size_t p = 0; p < rows[s].size(); ++p) pred.lambda.at(s, p) = rows[s][p];
  }
  pred.dither.width = j.at("dither").at("width").get<double>();
  pred.dither.seed = j.at("dither").at("seed").get<std::uint64_t>();
  pred.dither_at_predict = j.at("dither_at_predict").get<bool>();
  const auto& prov = j.at("provenance");
  pred.iterations = prov.at("iterations").get<int>();
  pred.final_violation = prov.at("final_violation").get<double>();
  pred.converged = prov.at("converged").get<bool>();
  pred.seed = prov.at("seed").get<std::uint64_t>();
  return pred;
}

inline void save_predictor(const FairPredictor& pred, const std::string& path) {
  atomic_write_file(path, predictor_to_json(pred).dump(2) + "\n");
}

inline FairPredictor load_predictor(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("cannot parse predictor file '" + path + "': " + e.what());
  }
  try {
    return predictor_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed predictor file '" + path + "': " + e.what());
  }
}

}  // namespace fairpost
