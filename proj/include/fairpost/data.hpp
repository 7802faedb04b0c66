#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairpost/errors.hpp"
#include "fairpost/grid.hpp"
#include "fairpost/io.hpp"
#include "fairpost/rng.hpp"

namespace fairpost {

struct LabeledSample {
  std::vector<double> x;
  std::string group;
  double y = 0.0;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::size_t dim = 0;

  std::size_t size() const { return samples.size(); }
};

/// Calibration-side data: features and group only, labels deliberately absent.
struct UnlabeledSet {
  std::vector<std::vector<double>> x;
  std::vector<std::string> groups;

  std::size_t size() const { return x.size(); }
};

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  std::size_t n = 4000;
  double p_group_b = 0.5;
  double noise_sd = 5.0;
  double bound = 100.0;  // clip range for Y
  std::uint64_t seed = 0;
};

/// Structural regression function: linear baseline plus, for group B, a
/// location shift and a polarizing curvature term.
inline double structural_mean(double x1, double x2, bool group_b) {
  double v = 5.0 * x1 + 3.0 * x2 + 20.0;
  if (group_b) v += 15.0 + 2.0 * (x1 - 5.0) * (x1 - 5.0);
  return v;
}

inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.p_group_b < 0.0 || cfg.p_group_b > 1.0) {
    throw validation_error("p_group_b must lie in [0, 1]");
  }
  if (!(cfg.noise_sd > 0.0)) throw validation_error("noise_sd must be positive");
  RngStream stream(cfg.seed, "synth");
  Dataset data;
  data.dim = 2;
  data.samples.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x1 = stream.uniform(0.0, 10.0);
    const double x2 = stream.uniform(0.0, 10.0);
    const bool group_b = stream.uniform01() < cfg.p_group_b;
    const double eps = stream.normal(0.0, cfg.noise_sd);
    LabeledSample s;
    s.x = {x1, x2};
    s.group = group_b ? "B" : "A";
    s.y = clip(structural_mean(x1, x2, group_b) + eps, cfg.bound);
    data.samples.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Seeded splitting
// ---------------------------------------------------------------------------

struct SplitConfig {
  double train = 0.6;
  double calibration = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
  bool stratified = false;
};

struct SplitResult {
  Dataset train;
  UnlabeledSet calibration;
  Dataset test;
};

namespace detail {

inline void check_split_fractions(const SplitConfig& cfg) {
  if (cfg.train < 0.0 || cfg.calibration < 0.0 || cfg.test < 0.0) {
    throw validation_error("split fractions must be nonnegative");
  }
  if (std::abs(cfg.train + cfg.calibration + cfg.test - 1.0) > 1e-12) {
    throw validation_error("split fractions must sum to 1");
  }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RngStream stream(seed, "split");
  stream.shuffle(idx);
  return idx;
}

}  // namespace detail

/// Shuffle then cut at floor(train*n) and floor((train+calibration)*n).
/// Every group present in the input must appear in every part; otherwise the
/// group weights downstream would be undefined.
inline SplitResult split(const Dataset& data, const SplitConfig& cfg) {
  detail::check_split_fractions(cfg);
  const std::size_t n = data.size();
  if (n < 3) throw validation_error("need at least 3 samples to split");

  std::vector<std::size_t> order;
  if (!cfg.stratified) {
    order = detail::shuffled_indices(n, cfg.seed);
  } else {
    // per-group shuffle, groups in sorted order, interleaved by position so
    // each part receives its share of every group
    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < n; ++i) by_group[data.samples[i].group].push_back(i);
    RngStream stream(cfg.seed, "split");
    std::vector<std::vector<std::size_t>> buckets;
    for (auto& [g, idx] : by_group) {
      stream.shuffle(idx);
      buckets.push_back(idx);
    }
    std::vector<std::size_t> heads(buckets.size(), 0);
    while (order.size() < n) {
      for (std::size_t b = 0; b < buckets.size(); ++b) {
        if (heads[b] < buckets[b].size()) order.push_back(buckets[b][heads[b]++]);
      }
    }
  }

  const std::size_t n_train = static_cast<std::size_t>(std::floor(cfg.train * static_cast<double>(n)));
  const std::size_t n_cal = static_cast<std::size_t>(
      std::floor((cfg.train + cfg.calibration) * static_cast<double>(n))) - n_train;

  SplitResult out;
  out.train.dim = data.dim;
  out.test.dim = data.dim;
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledSample& s = data.samples[order[i]];
    if (i < n_train) {
      out.train.samples.push_back(s);
    } else if (i < n_train + n_cal) {
      out.calibration.x.push_back(s.x);
      out.calibration.groups.push_back(s.group);
    } else {
      out.test.samples.push_back(s);
    }
  }

  std::set<std::string> declared;
  for (const auto& s : data.samples) declared.insert(s.group);
  auto check_part = [&](const std::set<std::string>& seen, const std::string& part) {
    for (const auto& g : declared) {
      if (!seen.count(g)) {
        throw validation_error("group '" + g + "' vanished from the " + part +
                               " part; try another seed or stratified splitting");
      }
    }
  };
  std::set<std::string> seen;
  for (const auto& s : out.train.samples) seen.insert(s.group);
  check_part(seen, "train");
  seen.clear();
  for (const auto& g : out.calibration.groups) seen.insert(g);
  check_part(seen, "calibration");
  seen.clear();
  for (const auto& s : out.test.samples) seen.insert(s.group);
  check_part(seen, "test");
  return out;
}

// ---------------------------------------------------------------------------
// CSV interchange (header row, comma separated, '.' decimal)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (quoted) {
      if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw io_error("missing column '" + name + "' in CSV header");
  }
};

inline CsvTable read_csv(const std::string& path) {
  const std::string content = read_file(path);
  CsvTable table;
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw io_error("CSV file '" + path + "' is empty");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split_csv_line(line));
  }
  return table;
}

}  // namespace detail

struct LoadReport {
  std::size_t dropped_rows = 0;
};

/// Typed samples from a CSV file. Rows with empty cells in any used column
/// are dropped (count reported); non-numeric content in a numeric column is
/// an error naming row and column.
inline Dataset load_csv(const std::string& path, const std::vector<std::string>& feature_cols,
                        const std::string& group_col,
                        const std::optional<std::string>& target_col = std::nullopt,
                        LoadReport* report = nullptr) {
  const detail::CsvTable table = detail::read_csv(path);
  std::vector<std::size_t> fidx;
  for (const auto& c : feature_cols) fidx.push_back(table.column(c));
  const std::size_t gidx = table.column(group_col);
  std::optional<std::size_t> tidx;
  if (target_col) tidx = table.column(*target_col);

  Dataset data;
  data.dim = feature_cols.size();
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](std::size_t c) -> const std::string& {
      static const std::string empty;
      return c < row.size() ? row[c] : empty;
    };
    bool missing = cell(gidx).empty();
    for (std::size_t c : fidx) missing = missing || cell(c).empty();
    if (tidx) missing = missing || cell(*tidx).empty();
    if (missing) {
      ++dropped;
      continue;
    }
    LabeledSample s;
    for (std::size_t j = 0; j < fidx.size(); ++j) {
      const auto v = detail::parse_double(cell(fidx[j]));
      if (!v) {
        throw io_error("row " + std::to_string(r + 2) + ", column '" + feature_cols[j] +
                       "': not a number: '" + cell(fidx[j]) + "'");
      }
      s.x.push_back(*v);
    }
    s.group = cell(gidx);
    if (tidx) {
      const auto v = detail::parse_double(cell(*tidx));
      if (!v) {
        throw io_error("row " + std::to_string(r + 2) + ", column '" + *target_col +
                       "': not a number: '" + cell(*tidx) + "'");
      }
      s.y = *v;
    }
    data.samples.push_back(std::move(s));
  }
  if (report) report->dropped_rows = dropped;
  if (data.samples.empty()) throw io_error("no usable rows in '" + path + "'");
  return data;
}

/// Externally supplied (score, group) pairs: bypasses the built-in learner so
/// any black-box model's predictions can be calibrated.
inline std::vector<std::pair<double, std::string>> scores_from_file(const std::string& path,
                                                                    const std::string& pred_col,
                                                                    const std::string& group_col) {
  const detail::CsvTable table = detail::read_csv(path);
  const std::size_t pidx = table.column(pred_col);
  const std::size_t gidx = table.column(group_col);
  std::vector<std::pair<double, std::string>> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (pidx >= row.size() || gidx >= row.size()) {
      throw io_error("row " + std::to_string(r + 2) + ": too few fields");
    }
    const auto v = detail::parse_double(row[pidx]);
    if (!v) {
      throw io_error("row " + std::to_string(r + 2) + ", column '" + pred_col +
                     "': not a finite number: '" + row[pidx] + "'");
    }
    out.emplace_back(*v, row[gidx]);
  }
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Interchange schema: columns x1..xd, s, y.
inline void save_csv(const Dataset& data, const std::string& path) {
  std::ostringstream out;
  for (std::size_t j = 0; j < data.dim; ++j) out << "x" << (j + 1) << ",";
  out << "s,y\n";
  for (const auto& s : data.samples) {
    for (double v : s.x) out << detail::format_double(v) << ",";
    out << s.group << "," << detail::format_double(s.y) << "\n";
  }
  atomic_write_file(path, out.str());
}

}  // namespace fairpost
