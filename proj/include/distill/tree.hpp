#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <tuple>
#include <span>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/rng.hpp"

namespace distill {

/// Node of a binary classification tree. Rows with x[feature] <= threshold
/// go left. Leaves keep the label counts of the training rows routed there.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count = 0;
  std::size_t positives = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  double prob() const noexcept {
    return count ? static_cast<double>(positives) / static_cast<double>(count) : 0.5;
  }
};

/// Nodes stored in preorder; node 0 is the root.
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const TreeNode& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i];
  }

  double predict_proba(std::span<const double> x) const { return leaf_for(x).prob(); }

  int depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  /// Split features in preorder (root, left, right); -1 marks a leaf.
  std::vector<int> preorder_features() const {
    std::vector<int> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(n.feature);
    return out;
  }

 private:
  int depth_from(std::size_t i) const {
    const TreeNode& n = nodes_[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
  }

  std::vector<TreeNode> nodes_;
};

/// Per-feature sorted unique values and the rank of every row's value.
class FeatureIndex {
 public:
  explicit FeatureIndex(const Dataset& data) : rows_(data.rows) {
    values_.resize(data.cols());
    ranks_.resize(data.cols() * data.rows);
    for (std::size_t f = 0; f < data.cols(); ++f) {
      auto col = data.column(f);
      auto& uniq = values_[f];
      uniq = col;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (std::size_t i = 0; i < data.rows; ++i) {
        ranks_[f * rows_ + i] = static_cast<std::uint32_t>(
            std::lower_bound(uniq.begin(), uniq.end(), col[i]) - uniq.begin());
      }
    }
  }

  std::span<const double> values(std::size_t f) const { return values_[f]; }
  std::uint32_t rank(std::size_t f, std::size_t row) const { return ranks_[f * rows_ + row]; }

 private:
  std::size_t rows_;
  std::vector<std::vector<double>> values_;
  std::vector<std::uint32_t> ranks_;
};

/// Weighted Gini impurity of a split held as an exact rational.
///
/// With child counts (n, pos), Gini(child) = 2 pos (n - pos) / n^2, so the
/// size-weighted sum is 2/N * [posL negL / nL + posR negR / nR]. The bracket
/// is stored as num/den with integer arithmetic so that equal impurities
/// compare equal and tie-breaking is exact.
struct SplitScore {
  unsigned __int128 num = 0;
  unsigned __int128 den = 1;

  static SplitScore of(std::size_t n_left, std::size_t pos_left, std::size_t n_right, std::size_t pos_right) {
    using U = unsigned __int128;
    U a = U(pos_left) * (n_left - pos_left);
    U c = U(pos_right) * (n_right - pos_right);
    return {a * n_right + c * n_left, U(n_left) * n_right};
  }
  static SplitScore parent(std::size_t n, std::size_t pos) {
    using U = unsigned __int128;
    return {U(pos) * (n - pos), U(n)};
  }

  bool operator<(const SplitScore& o) const { return num * o.den < o.num * den; }
  bool operator==(const SplitScore& o) const { return num * o.den == o.num * den; }

  /// Weighted Gini impurity given the node size.
  double gini(std::size_t n) const {
    return 2.0 * static_cast<double>(num) / static_cast<double>(den) / static_cast<double>(n);
  }
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

/// Exhaustive search over the given features and all midpoints between
/// consecutive distinct values present in the node. Ties go to the lower
/// feature index, then the lower threshold (features must be ascending).
inline std::optional<Split> find_best_split(const Dataset& data, const FeatureIndex& index,
                                            std::span<const std::size_t> rows,
                                            std::span<const std::size_t> features) {
  std::optional<Split> best;
  const std::size_t n = rows.size();
  std::size_t total_pos = 0;
  for (auto r : rows) total_pos += static_cast<std::size_t>(data.y[r]);

  std::vector<std::size_t> hist_count, hist_pos;
  std::vector<std::pair<std::uint32_t, int>> pairs;
  for (std::size_t f : features) {
    auto vals = index.values(f);
    const std::size_t u = vals.size();
    if (u < 2) continue;

    // (rank, count, positives) for present ranks in ascending order
    std::vector<std::tuple<std::uint32_t, std::size_t, std::size_t>> groups;
    if (n * 4 < u) {
      pairs.clear();
      for (auto r : rows) pairs.emplace_back(index.rank(f, r), data.y[r]);
      std::sort(pairs.begin(), pairs.end());
      for (const auto& [rk, lab] : pairs) {
        if (groups.empty() || std::get<0>(groups.back()) != rk) groups.emplace_back(rk, 0, 0);
        ++std::get<1>(groups.back());
        std::get<2>(groups.back()) += static_cast<std::size_t>(lab);
      }
    } else {
      hist_count.assign(u, 0);
      hist_pos.assign(u, 0);
      for (auto r : rows) {
        auto rk = index.rank(f, r);
        ++hist_count[rk];
        hist_pos[rk] += static_cast<std::size_t>(data.y[r]);
      }
      for (std::uint32_t rk = 0; rk < u; ++rk) {
        if (hist_count[rk]) groups.emplace_back(rk, hist_count[rk], hist_pos[rk]);
      }
    }

    std::size_t left_n = 0, left_pos = 0;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      left_n += std::get<1>(groups[g]);
      left_pos += std::get<2>(groups[g]);
      SplitScore s = SplitScore::of(left_n, left_pos, n - left_n, total_pos - left_pos);
      if (!best || s < best->score) {
        double lo = vals[std::get<0>(groups[g])];
        double hi = vals[std::get<0>(groups[g + 1])];
        double t = lo + (hi - lo) / 2.0;
        if (!(t < hi)) t = lo;
        best = Split{f, t, s};
      }
    }
  }
  return best;
}

struct GrowOptions {
  int max_depth = 3;
  std::size_t max_features = 0;  ///< features tried per node; 0 = all
  bool require_decrease = true;  ///< stop when no split strictly lowers impurity
};

namespace detail {

struct TreeGrower {
  const Dataset& data;
  const FeatureIndex& index;
  const GrowOptions& opts;
  Rng* rng;
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> all_features;

  std::vector<std::size_t> node_features() {
    if (opts.max_features == 0 || opts.max_features >= all_features.size() || rng == nullptr) return all_features;
    std::vector<std::size_t> f = all_features;
    for (std::size_t i = 0; i < opts.max_features; ++i) {
      std::size_t j = i + uniform_index(*rng, f.size() - i);
      std::swap(f[i], f[j]);
    }
    f.resize(opts.max_features);
    std::sort(f.begin(), f.end());
    return f;
  }

  int grow(std::vector<std::size_t> rows, int depth) {
    int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    std::size_t pos = 0;
    for (auto r : rows) pos += static_cast<std::size_t>(data.y[r]);
    nodes[id].count = rows.size();
    nodes[id].positives = pos;
    if (depth >= opts.max_depth || pos == 0 || pos == rows.size()) return id;

    auto features = node_features();
    auto split = find_best_split(data, index, rows, features);
    if (!split) return id;
    if (opts.require_decrease && !(split->score < SplitScore::parent(rows.size(), pos))) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (data.at(r, split->feature) <= split->threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = static_cast<int>(split->feature);
    nodes[id].threshold = split->threshold;
    int l = grow(std::move(left), depth + 1);
    nodes[id].left = l;
    int r = grow(std::move(right), depth + 1);
    nodes[id].right = r;
    return id;
  }
};

}  // namespace detail

/// Greedy top-down induction minimising weighted Gini impurity.
inline DecisionTree grow_tree(const Dataset& data, const FeatureIndex& index, std::vector<std::size_t> rows,
                              const GrowOptions& opts, Rng* rng = nullptr) {
  detail::TreeGrower g{data, index, opts, rng, {}, {}};
  g.all_features.resize(data.cols());
  std::iota(g.all_features.begin(), g.all_features.end(), std::size_t{0});
  if (!rows.empty()) g.grow(std::move(rows), 0);
  else g.nodes.emplace_back();
  return DecisionTree(std::move(g.nodes));
}

inline DecisionTree grow_tree(const Dataset& data, const GrowOptions& opts) {
  FeatureIndex index(data);
  std::vector<std::size_t> rows(data.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return grow_tree(data, index, std::move(rows), opts);
}

}  // namespace distill
