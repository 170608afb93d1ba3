#pragma once

#include <memory>
#include <string>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/parallel.hpp"
#include "distill/sampler.hpp"
#include "distill/student.hpp"
#include "distill/tree.hpp"

namespace distill {

/// CART classification tree used as a distillation student.
class CartTree final : public Student {
 public:
  explicit CartTree(DecisionTree tree) : tree_(std::move(tree)) {}

  double predict_proba(std::span<const double> x) const override { return tree_.predict_proba(x); }
  std::string structure_key() const override;
  int complexity() const override { return tree_.depth(); }

  const DecisionTree& tree() const noexcept { return tree_; }
  int depth() const { return tree_.depth(); }

 private:
  DecisionTree tree_;
};

/// Preorder listing of split features with "L" for leaves, thresholds
/// omitted: "[3, 4, 11, L, L, 8, L, L, 4, 1, L, L, 9, L, L]".
inline std::string cart_structure_key(const DecisionTree& tree) {
  std::string key = "[";
  bool first = true;
  for (int f : tree.preorder_features()) {
    if (!first) key += ", ";
    first = false;
    key += f < 0 ? std::string("L") : std::to_string(f);
  }
  return key + "]";
}

inline std::string CartTree::structure_key() const { return cart_structure_key(tree_); }

/// Fits a depth-limited CART tree by exhaustive greedy Gini search. Leaves
/// hold the label-1 frequency of their training rows. The seed is unused:
/// the exhaustive search is deterministic.
inline CartTree fit_cart(const Dataset& corpus, int max_depth, std::uint64_t /*seed*/ = 0) {
  if (corpus.empty()) throw FitError("fit_cart: corpus is empty");
  if (max_depth < 0) throw FitError("fit_cart: max_depth must be non-negative");
  return CartTree(grow_tree(corpus, GrowOptions{max_depth, 0, true}));
}

/// Fits one tree per independent corpus of size n. Corpus k is drawn with
/// index first_index + k.
inline std::vector<Candidate> cart_candidates(const CorpusSource& source, std::size_t n, std::size_t count,
                                              int max_depth, std::uint64_t first_index = 1) {
  if (count == 0) throw DomainError("cart_candidates: N must be positive");
  std::vector<Candidate> out(count);
  parallel_for(count, [&](std::size_t k) {
    Dataset corpus = source.draw(n, first_index + k);
    out[k] = make_candidate(std::make_shared<CartTree>(fit_cart(corpus, max_depth)), Family::dt, k);
  });
  return out;
}

}  // namespace distill
