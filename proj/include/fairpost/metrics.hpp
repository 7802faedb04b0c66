#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairpost/dual.hpp"
#include "fairpost/errors.hpp"
#include "fairpost/fairness.hpp"

namespace fairpost {

/// Per-(group, constraint) absolute violations and their maximum U.
/// Prescribed-level columns compare the group CDF to the level; pooled
/// columns compare it to the pooled empirical CDF. CDFs are right-continuous
/// (<=) and computed as count/total before any subtraction, matching the
/// solver's stationarity measure exactly.
struct ViolationReport {
  std::vector<std::string> groups;   // sorted
  std::size_t columns = 0;
  std::vector<double> matrix;        // groups x columns
  double max_violation = 0.0;

  double at(std::size_t s, std::size_t p) const { return matrix[s * columns + p]; }
};

inline ViolationReport unfairness(const std::vector<double>& values,
                                  const std::vector<std::string>& labels,
                                  const FairnessSpec& spec,
                                  const std::vector<std::string>& declared = {}) {
  if (values.size() != labels.size()) {
    throw validation_error("unfairness: values/labels length mismatch");
  }
  const GroupWeights w = group_weights(labels, declared);
  const ConstraintSystem sys = compile_spec(spec);
  const std::size_t S = w.groups.size();
  const std::size_t P = sys.size();

  std::map<std::string, std::size_t> gid;
  for (std::size_t s = 0; s < S; ++s) gid[w.groups[s]] = s;

  std::vector<long> counts(S * P, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t s = gid.at(labels[i]);
    for (std::size_t p = 0; p < P; ++p) {
      if (values[i] <= sys.columns[p].threshold) ++counts[s * P + p];
    }
  }

  ViolationReport rep;
  rep.groups = w.groups;
  rep.columns = P;
  rep.matrix.assign(S * P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    long pooled_count = 0;
    for (std::size_t s = 0; s < S; ++s) pooled_count += counts[s * P + p];
    const double pooled_cdf =
        static_cast<double>(pooled_count) / static_cast<double>(values.size());
    for (std::size_t s = 0; s < S; ++s) {
      const double cdf =
          static_cast<double>(counts[s * P + p]) / static_cast<double>(w.counts[s]);
      rep.matrix[s * P + p] = sys.columns[p].pooled ? std::abs(cdf - pooled_cdf)
                                                    : std::abs(cdf - sys.columns[p].level);
    }
  }
  rep.max_violation = 0.0;
  for (double v : rep.matrix) rep.max_violation = std::max(rep.max_violation, v);
  return rep;
}

/// Two-sample Kolmogorov-Smirnov statistic, maximized over all unordered
/// group pairs. The sup is exact: step CDFs attain it at observed values.
inline double ks_statistic(const std::vector<double>& values,
                           const std::vector<std::string>& labels) {
  if (values.size() != labels.size()) {
    throw validation_error("ks_statistic: values/labels length mismatch");
  }
  std::map<std::string, std::vector<double>> per_group;
  for (std::size_t i = 0; i < values.size(); ++i) per_group[labels[i]].push_back(values[i]);
  if (per_group.size() < 2) {
    throw validation_error("ks_statistic needs at least two groups");
  }
  for (auto& [g, v] : per_group) std::sort(v.begin(), v.end());

  std::vector<double> candidates(values);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto cdf_at = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin()) /
           static_cast<double>(sorted.size());
  };

  double ks = 0.0;
  for (auto a = per_group.begin(); a != per_group.end(); ++a) {
    for (auto b = std::next(a); b != per_group.end(); ++b) {
      for (double t : candidates) {
        ks = std::max(ks, std::abs(cdf_at(a->second, t) - cdf_at(b->second, t)));
      }
    }
  }
  return ks;
}

/// Price of fairness: RMSE between post-processed and base predictions.
inline double rmse_price(const std::vector<double>& fair, const std::vector<double>& base) {
  if (fair.size() != base.size()) {
    throw validation_error("rmse_price: prediction vectors have different lengths");
  }
  if (fair.empty()) throw validation_error("rmse_price: empty prediction vectors");
  std::vector<double> sq;
  sq.reserve(fair.size());
  for (std::size_t i = 0; i < fair.size(); ++i) {
    const double d = fair[i] - base[i];
    sq.push_back(d * d);
  }
  return std::sqrt(chunked_sum(sq) / static_cast<double>(fair.size()));
}

/// Mean squared error against held-out labels.
inline double risk_mse(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size()) {
    throw validation_error("risk_mse: predictions/targets length mismatch");
  }
  if (predictions.empty()) throw validation_error("risk_mse: empty inputs");
  std::vector<double> sq;
  sq.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sq.push_back(d * d);
  }
  return chunked_sum(sq) / static_cast<double>(predictions.size());
}

/// Bundle of the evaluation quantities reported per run.
struct EvaluationReport {
  double rmse_price = 0.0;
  ViolationReport violations;
  double ks = 0.0;
  double risk = 0.0;
  bool has_risk = false;
  std::vector<long> group_counts;  // aligned with violations.groups
};

inline EvaluationReport evaluate_predictions(const std::vector<double>& fair,
                                             const std::vector<double>& base,
                                             const std::vector<std::string>& labels,
                                             const FairnessSpec& spec,
                                             const std::vector<double>& targets = {}) {
  EvaluationReport rep;
  rep.rmse_price = rmse_price(fair, base);
  rep.violations = unfairness(fair, labels, spec);
  rep.ks = ks_statistic(fair, labels);
  if (!targets.empty()) {
    rep.risk = risk_mse(fair, targets);
    rep.has_risk = true;
  }
  const GroupWeights w = group_weights(labels);
  rep.group_counts = w.counts;
  return rep;
}

inline nlohmann::json report_to_json(const EvaluationReport& rep) {
  std::vector<std::vector<double>> matrix;
  for (std::size_t s = 0; s < rep.violations.groups.size(); ++s) {
    std::vector<double> row;
    for (std::size_t p = 0; p < rep.violations.columns; ++p) row.push_back(rep.violations.at(s, p));
    matrix.push_back(std::move(row));
  }
  nlohmann::json j{{"rmse_price", rep.rmse_price},
                   {"unfairness", rep.violations.max_violation},
                   {"unfairness_matrix", matrix},
                   {"groups", rep.violations.groups},
                   {"group_counts", rep.group_counts},
                   {"ks", rep.ks}};
  if (rep.has_risk) j["risk_mse"] = rep.risk;
  return j;
}

}  // namespace fairpost
