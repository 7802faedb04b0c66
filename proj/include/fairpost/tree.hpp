#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairpost/errors.hpp"
#include "fairpost/io.hpp"

namespace fairpost {

struct TreeOptions {
  int min_samples_leaf = 20;
  int max_depth = -1;  // unbounded
};

struct TreeNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean
  long count = 0;      // training samples routed here
};

/// CART regression tree under squared loss. Greedy: each node takes the
/// (feature, threshold) split with the largest SSE reduction among splits
/// whose children both satisfy min_samples_leaf; candidates are midpoints
/// between consecutive distinct sorted feature values. Equal-gain ties go to
/// the lowest feature index, then the lowest threshold, so fitting is
/// deterministic across runs and platforms.
struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t dim = 0;
  TreeOptions options;
};

namespace detail {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline double subset_mean(const std::vector<double>& y, const std::vector<std::size_t>& idx) {
  double sum = 0.0;
  for (std::size_t i : idx) sum += y[i];
  return sum / static_cast<double>(idx.size());
}

inline SplitChoice best_split(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& y, const std::vector<std::size_t>& idx,
                              std::size_t dim, int min_leaf) {
  const std::size_t n = idx.size();
  SplitChoice best;
  if (n < 2 * static_cast<std::size_t>(min_leaf)) return best;

  double total = 0.0, total_sq = 0.0;
  for (std::size_t i : idx) {
    total += y[i];
    total_sq += y[i] * y[i];
  }
  const double parent_sse = total_sq - total * total / static_cast<double>(n);

  std::vector<std::pair<double, double>> column(n);  // (feature value, target)
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {x[idx[i]][j], y[idx[i]]};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0, left_sq = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += column[i].second;
      left_sq += column[i].second * column[i].second;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) {
        continue;
      }
      if (!(column[i].first < column[i + 1].first)) continue;  // no boundary here
      const double right_sum = total - left_sum;
      const double right_sq = total_sq - left_sq;
      const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                         (right_sq - right_sum * right_sum / static_cast<double>(nr));
      const double gain = parent_sse - sse;
      if (gain > best.gain) {  // strict: ties keep lowest feature, lowest threshold
        best.found = true;
        best.feature = static_cast<int>(j);
        best.threshold = column[i].first + 0.5 * (column[i + 1].first - column[i].first);
        best.gain = gain;
      }
    }
  }
  if (best.found && !(best.gain > 0.0)) best.found = false;
  return best;
}

inline int grow(RegressionTree& tree, const std::vector<std::vector<double>>& x,
                const std::vector<double>& y, const std::vector<std::size_t>& idx, int depth) {
  TreeNode node;
  node.value = subset_mean(y, idx);
  node.count = static_cast<long>(idx.size());
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(node);

  if (tree.options.max_depth >= 0 && depth >= tree.options.max_depth) return id;
  const SplitChoice split =
      best_split(x, y, idx, tree.dim, tree.options.min_samples_leaf);
  if (!split.found) return id;

  std::vector<std::size_t> left, right;
  for (std::size_t i : idx) {
    (x[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
  }
  tree.nodes[static_cast<std::size_t>(id)].leaf = false;
  tree.nodes[static_cast<std::size_t>(id)].feature = split.feature;
  tree.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
  const int l = grow(tree, x, y, left, depth + 1);
  tree.nodes[static_cast<std::size_t>(id)].left = l;
  const int r = grow(tree, x, y, right, depth + 1);
  tree.nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

}  // namespace detail

inline RegressionTree fit_tree(const std::vector<std::vector<double>>& x,
                               const std::vector<double>& y, const TreeOptions& options = {}) {
  if (x.empty() || x.size() != y.size()) {
    throw validation_error("fit_tree: empty data or feature/target length mismatch");
  }
  const std::size_t dim = x[0].size();
  if (dim == 0) throw validation_error("fit_tree: zero-dimensional features");
  for (const auto& row : x) {
    if (row.size() != dim) throw validation_error("fit_tree: inconsistent feature dimensions");
  }
  if (options.min_samples_leaf < 1) throw validation_error("min_samples_leaf must be >= 1");

  RegressionTree tree;
  tree.dim = dim;
  tree.options = options;
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) idx[i] = i;
  detail::grow(tree, x, y, idx, 0);
  return tree;
}

inline double predict_tree(const RegressionTree& tree, const std::vector<double>& x) {
  if (x.size() != tree.dim) {
    throw validation_error("predict_tree: expected " + std::to_string(tree.dim) +
                           " features, got " + std::to_string(x.size()));
  }
  int k = 0;
  while (!tree.nodes[static_cast<std::size_t>(k)].leaf) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(k)];
    k = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return tree.nodes[static_cast<std::size_t>(k)].value;
}

inline double training_sse(const RegressionTree& tree, const std::vector<std::vector<double>>& x,
                           const std::vector<double>& y) {
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = predict_tree(tree, x[i]) - y[i];
    sse += d * d;
  }
  return sse;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    if (n.leaf) {
      nodes.push_back({{"leaf", true}, {"value", n.value}, {"count", n.count}});
    } else {
      nodes.push_back({{"leaf", false},
                       {"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"count", n.count}});
    }
  }
  return nlohmann::json{{"format", "fairpost.tree.v1"},
                        {"dim", tree.dim},
                        {"min_samples_leaf", tree.options.min_samples_leaf},
                        {"max_depth", tree.options.max_depth},
                        {"nodes", nodes}};
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format") != "fairpost.tree.v1") {
    throw io_error("not a fairpost tree file (missing or wrong 'format')");
  }
  RegressionTree tree;
  tree.dim = j.at("dim").get<std::size_t>();
  tree.options.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  tree.options.max_depth = j.at("max_depth").get<int>();
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.leaf = n.at("leaf").get<bool>();
    node.count = n.value("count", 0L);
    if (node.leaf) {
      node.value = n.at("value").get<double>();
    } else {
      node.feature = n.at("feature").get<int>();
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
    }
    tree.nodes.push_back(node);
  }
  if (tree.nodes.empty()) throw io_error("tree file has no nodes");
  return tree;
}

inline void save_tree(const RegressionTree& tree, const std::string& path) {
  atomic_write_file(path, tree_to_json(tree).dump(2) + "\n");
}

inline RegressionTree load_tree(const std::string& path) {
  try {
    return tree_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("cannot parse tree file '" + path + "': " + e.what());
  }
}

}  // namespace fairpost
