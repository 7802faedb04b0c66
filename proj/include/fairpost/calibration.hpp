#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairpost/errors.hpp"
#include "fairpost/grid.hpp"
#include "fairpost/rng.hpp"

namespace fairpost {

/// Additive uniform noise on [0, width], projected back into [-A, A].
/// width = 0 leaves scores untouched (deterministic pipeline).
struct DitherConfig {
  double width = 0.0;
  std::uint64_t seed = 0;
};

/// The deterministic part of dithering, split out so the additive+project
/// semantics are testable without a stream.
inline double apply_dither(double score, double xi, double bound) {
  return clip(score + xi, bound);
}

inline double dither(double score, double width, double bound, RngStream& stream) {
  if (width == 0.0) return score;
  return apply_dither(score, width * stream.uniform01(), bound);
}

inline std::vector<double> dither_scores(const std::vector<double>& scores,
                                         const DitherConfig& cfg, double bound) {
  RngStream stream(cfg.seed, "dither");
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(dither(s, cfg.width, bound, stream));
  return out;
}

/// Per-group sample counts and empirical weights pi_s = N_s / N.
struct GroupWeights {
  std::vector<std::string> groups;  // sorted labels
  std::vector<long> counts;
  std::vector<double> weights;
};

inline GroupWeights group_weights(const std::vector<std::string>& labels,
                                  const std::vector<std::string>& declared = {}) {
  if (labels.empty()) throw validation_error("group_weights: empty sample");
  std::map<std::string, long> counts;
  for (const auto& g : declared) counts.emplace(g, 0);
  for (const auto& l : labels) {
    auto it = counts.find(l);
    if (it == counts.end()) {
      if (!declared.empty()) {
        throw validation_error("group '" + l + "' not in the declared group set");
      }
      counts.emplace(l, 1);
    } else {
      ++it->second;
    }
  }
  GroupWeights w;
  const double n = static_cast<double>(labels.size());
  for (const auto& [g, c] : counts) {
    if (c == 0) {
      throw validation_error("declared group '" + g + "' has no calibration samples");
    }
    w.groups.push_back(g);
    w.counts.push_back(c);
    w.weights.push_back(static_cast<double>(c) / n);
  }
  return w;
}

/// Dithered (score, group) pairs with the per-group bookkeeping the dual
/// machinery needs. Scores are expected to be already clipped and dithered.
struct CalibrationSet {
  std::vector<double> scores;
  std::vector<int> group_ids;              // index into `groups`
  std::vector<std::string> groups;         // sorted labels
  std::vector<long> counts;                // N_s
  std::vector<double> weights;             // pi_s
  std::vector<std::vector<std::size_t>> index_sets;  // I_s

  std::size_t size() const { return scores.size(); }
  std::size_t group_count() const { return groups.size(); }

  int group_index(const std::string& label) const {
    auto it = std::lower_bound(groups.begin(), groups.end(), label);
    if (it == groups.end() || *it != label) return -1;
    return static_cast<int>(it - groups.begin());
  }
};

inline CalibrationSet make_calibration_set(const std::vector<double>& scores,
                                           const std::vector<std::string>& labels,
                                           const std::vector<std::string>& declared = {}) {
  if (scores.size() != labels.size()) {
    throw validation_error("make_calibration_set: scores/labels length mismatch");
  }
  GroupWeights w = group_weights(labels, declared);
  CalibrationSet cal;
  cal.scores = scores;
  cal.groups = w.groups;
  cal.counts = w.counts;
  cal.weights = w.weights;
  cal.group_ids.resize(labels.size());
  cal.index_sets.resize(w.groups.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int s = cal.group_index(labels[i]);
    cal.group_ids[i] = s;
    cal.index_sets[static_cast<std::size_t>(s)].push_back(i);
  }
  return cal;
}

}  // namespace fairpost
