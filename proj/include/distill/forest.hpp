#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/parallel.hpp"
#include "distill/rng.hpp"
#include "distill/tree.hpp"

namespace distill {

struct ForestOptions {
  std::size_t n_trees = 100;
  int max_depth = 8;
  std::size_t max_features = 0;  ///< 0 = floor(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

/// Random-forest binary classifier used as the fixed teacher. Immutable
/// after fitting.
struct Forest {
  std::vector<DecisionTree> trees;
  ForestOptions options;
  std::size_t n_features = 0;
};

/// Fits each tree on a bootstrap resample with a per-tree RNG stream derived
/// from (seed, tree index). Splits continue while a node is impure, even
/// when the best split leaves impurity unchanged.
inline Forest fit_forest(const Dataset& data, const ForestOptions& opts) {
  if (opts.n_trees == 0) throw FitError("fit_forest: n_trees must be positive");
  if (opts.max_depth <= 0) throw FitError("fit_forest: max_depth must be positive");
  if (data.rows < 2) throw FitError("fit_forest: need at least 2 rows");
  if (!data.has_both_labels()) throw FitError("fit_forest: training data contains a single class");

  Forest forest;
  forest.options = opts;
  forest.n_features = data.cols();
  if (forest.options.max_features == 0) {
    forest.options.max_features =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(data.cols())))));
  }
  GrowOptions grow{opts.max_depth, forest.options.max_features, /*require_decrease=*/false};
  FeatureIndex index(data);
  forest.trees.resize(opts.n_trees);
  parallel_for(opts.n_trees, [&](std::size_t t) {
    Rng rng = make_rng(opts.seed, {t});
    std::vector<std::size_t> rows(data.rows);
    if (opts.bootstrap) {
      for (auto& r : rows) r = uniform_index(rng, data.rows);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    forest.trees[t] = grow_tree(data, index, std::move(rows), grow, &rng);
  });
  return forest;
}

inline Forest fit_forest(const Dataset& data, std::size_t n_trees, int max_depth, std::uint64_t seed) {
  ForestOptions opts;
  opts.n_trees = n_trees;
  opts.max_depth = max_depth;
  opts.seed = seed;
  return fit_forest(data, opts);
}

/// Majority vote over trees; a tree votes 1 when its leaf frequency is at
/// least 0.5. An even split of votes resolves to 1.
inline int predict_label(const Forest& f, std::span<const double> x) {
  if (x.size() != f.n_features) {
    throw ShapeError("predict_label: expected " + std::to_string(f.n_features) + " features, got " +
                     std::to_string(x.size()));
  }
  std::size_t ones = 0;
  for (const auto& t : f.trees) ones += t.predict_proba(x) >= 0.5 ? 1 : 0;
  return 2 * ones >= f.trees.size() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// JSON model file

inline nlohmann::json forest_to_json(const Forest& f) {
  nlohmann::json j;
  j["format"] = "distill-forest-v1";
  j["n_features"] = f.n_features;
  j["n_trees"] = f.options.n_trees;
  j["max_depth"] = f.options.max_depth;
  j["max_features"] = f.options.max_features;
  j["bootstrap"] = f.options.bootstrap;
  j["seed"] = f.options.seed;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : f.trees) {
    auto nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.count, n.positives});
    }
    trees.push_back(std::move(nodes));
  }
  return j;
}

inline Forest forest_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "distill-forest-v1") throw ParseError("not a distill forest model file");
    Forest f;
    f.n_features = j.at("n_features").get<std::size_t>();
    f.options.n_trees = j.at("n_trees").get<std::size_t>();
    f.options.max_depth = j.at("max_depth").get<int>();
    f.options.max_features = j.at("max_features").get<std::size_t>();
    f.options.bootstrap = j.at("bootstrap").get<bool>();
    f.options.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& nj : tj) {
        TreeNode n;
        n.feature = nj.at(0).get<int>();
        n.threshold = nj.at(1).get<double>();
        n.left = nj.at(2).get<int>();
        n.right = nj.at(3).get<int>();
        n.count = nj.at(4).get<std::size_t>();
        n.positives = nj.at(5).get<std::size_t>();
        nodes.push_back(n);
      }
      f.trees.emplace_back(std::move(nodes));
    }
    if (f.trees.size() != f.options.n_trees) throw ParseError("forest model: tree count mismatch");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("forest model: ") + e.what());
  }
}

inline void save_forest(const Forest& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write forest model '" + path + "'");
  out << forest_to_json(f).dump() << '\n';
}

inline Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open forest model '" + path + "'");
  try {
    return forest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("forest model: ") + e.what());
  }
}

}  // namespace distill
