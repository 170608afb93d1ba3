#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/parallel.hpp"
#include "distill/rng.hpp"
#include "distill/sampler.hpp"
#include "distill/student.hpp"

namespace distill {

enum class ExprKind : std::uint8_t { add, mul, var, constant };

struct ExprNode {
  ExprKind kind = ExprKind::constant;
  int var = 0;
  double value = 0.0;

  bool is_op() const noexcept { return kind == ExprKind::add || kind == ExprKind::mul; }

  static ExprNode add() { return {ExprKind::add, 0, 0.0}; }
  static ExprNode mul() { return {ExprKind::mul, 0, 0.0}; }
  static ExprNode variable(int j) { return {ExprKind::var, j, 0.0}; }
  static ExprNode constant(double v) { return {ExprKind::constant, 0, v}; }
};

/// Binary {+, x} expression tree stored in prefix order. A terminal has
/// depth 0.
class ExprTree {
 public:
  ExprTree() : nodes_{ExprNode::constant(0.0)} {}
  explicit ExprTree(std::vector<ExprNode> prefix) : nodes_(std::move(prefix)) {
    if (nodes_.empty() || subtree_end(0) != nodes_.size()) throw DomainError("ExprTree: malformed prefix sequence");
  }

  static ExprTree var(int j) { return ExprTree({ExprNode::variable(j)}); }
  static ExprTree constant(double v) { return ExprTree({ExprNode::constant(v)}); }
  static ExprTree join(ExprKind op, const ExprTree& a, const ExprTree& b) {
    std::vector<ExprNode> n{ExprNode{op, 0, 0.0}};
    n.insert(n.end(), a.nodes_.begin(), a.nodes_.end());
    n.insert(n.end(), b.nodes_.begin(), b.nodes_.end());
    return ExprTree(std::move(n));
  }
  friend ExprTree operator+(const ExprTree& a, const ExprTree& b) { return join(ExprKind::add, a, b); }
  friend ExprTree operator*(const ExprTree& a, const ExprTree& b) { return join(ExprKind::mul, a, b); }

  const std::vector<ExprNode>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// One past the last node of the subtree rooted at i.
  std::size_t subtree_end(std::size_t i) const {
    std::size_t need = 1;
    while (need > 0) {
      if (i >= nodes_.size()) throw DomainError("ExprTree: truncated prefix sequence");
      need += nodes_[i].is_op() ? 2 : 0;
      --need;
      ++i;
    }
    return i;
  }

  int depth_at(std::size_t i) const {
    std::size_t pos = i;
    return depth_rec(pos);
  }
  int depth() const { return depth_at(0); }

  ExprTree subtree(std::size_t i) const {
    return ExprTree(std::vector<ExprNode>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                          nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i))));
  }

  /// Copy with the subtree at i replaced by `other`.
  ExprTree replace(std::size_t i, const ExprTree& other) const {
    std::vector<ExprNode> n(nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
    n.insert(n.end(), other.nodes_.begin(), other.nodes_.end());
    n.insert(n.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i)), nodes_.end());
    return ExprTree(std::move(n));
  }

  double eval(std::span<const double> x) const {
    std::size_t pos = 0;
    return eval_rec(pos, x);
  }

  /// Evaluates over all rows at once. cols is column-major (cols[j][i]).
  std::vector<double> eval_columns(const std::vector<std::vector<double>>& cols, std::size_t rows) const {
    std::size_t pos = 0;
    return eval_cols_rec(pos, cols, rows);
  }

  std::string to_string() const {
    std::size_t pos = 0;
    return str_rec(pos);
  }

  bool operator==(const ExprTree& o) const {
    if (nodes_.size() != o.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto &a = nodes_[i], &b = o.nodes_[i];
      if (a.kind != b.kind || a.var != b.var || a.value != b.value) return false;
    }
    return true;
  }

 private:
  int depth_rec(std::size_t& pos) const {
    const ExprNode& n = nodes_[pos++];
    if (!n.is_op()) return 0;
    int l = depth_rec(pos);
    int r = depth_rec(pos);
    return 1 + std::max(l, r);
  }

  double eval_rec(std::size_t& pos, std::span<const double> x) const {
    const ExprNode& n = nodes_[pos++];
    switch (n.kind) {
      case ExprKind::var: return x[static_cast<std::size_t>(n.var)];
      case ExprKind::constant: return n.value;
      case ExprKind::add: {
        double a = eval_rec(pos, x);
        return a + eval_rec(pos, x);
      }
      case ExprKind::mul: {
        double a = eval_rec(pos, x);
        return a * eval_rec(pos, x);
      }
    }
    return 0.0;
  }

  std::vector<double> eval_cols_rec(std::size_t& pos, const std::vector<std::vector<double>>& cols,
                                    std::size_t rows) const {
    const ExprNode& n = nodes_[pos++];
    if (n.kind == ExprKind::var) return cols.at(static_cast<std::size_t>(n.var));
    if (n.kind == ExprKind::constant) return std::vector<double>(rows, n.value);
    std::vector<double> a = eval_cols_rec(pos, cols, rows);
    std::vector<double> b = eval_cols_rec(pos, cols, rows);
    if (n.kind == ExprKind::add) {
      for (std::size_t i = 0; i < rows; ++i) a[i] += b[i];
    } else {
      for (std::size_t i = 0; i < rows; ++i) a[i] *= b[i];
    }
    return a;
  }

  std::string str_rec(std::size_t& pos) const {
    const ExprNode& n = nodes_[pos++];
    if (n.kind == ExprKind::var) return "X" + std::to_string(n.var);
    if (n.kind == ExprKind::constant) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", n.value);
      return buf;
    }
    std::string a = str_rec(pos);
    std::string b = str_rec(pos);
    return "(" + a + (n.kind == ExprKind::add ? " + " : " * ") + b + ")";
  }

  std::vector<ExprNode> nodes_;
};

/// Sum of monomials; a monomial is its sorted list of variable indices (the
/// empty list is the constant term).
using Polynomial = std::map<std::vector<int>, double>;

inline Polynomial expand(const ExprTree& tree) {
  struct Expander {
    const std::vector<ExprNode>& nodes;
    std::size_t pos = 0;
    Polynomial run() {
      const ExprNode& n = nodes[pos++];
      if (n.kind == ExprKind::var) return {{{n.var}, 1.0}};
      if (n.kind == ExprKind::constant) return {{{}, n.value}};
      Polynomial a = run();
      Polynomial b = run();
      Polynomial out;
      if (n.kind == ExprKind::add) {
        out = std::move(a);
        for (const auto& [m, c] : b) out[m] += c;
      } else {
        for (const auto& [ma, ca] : a) {
          for (const auto& [mb, cb] : b) {
            std::vector<int> m = ma;
            m.insert(m.end(), mb.begin(), mb.end());
            std::sort(m.begin(), m.end());
            out[m] += ca * cb;
          }
        }
      }
      return out;
    }
  };
  return Expander{tree.nodes()}.run();
}

/// Canonical key of a formula: expanded monomials with coefficients dropped,
/// e.g. "X3 + X4 + X11 + 1". Terms whose coefficient is zero up to
/// 1e-9 * (1 + max |coefficient|) are removed; an all-zero polynomial is "0".
inline std::string canonicalize(const ExprTree& tree) {
  Polynomial poly = expand(tree);
  double scale = 0.0;
  for (const auto& [m, c] : poly) scale = std::max(scale, std::abs(c));
  const double tol = 1e-9 * (1.0 + scale);
  std::string key;
  bool has_constant = false;
  for (const auto& [m, c] : poly) {
    if (!(std::abs(c) > tol)) continue;
    if (m.empty()) {
      has_constant = true;
      continue;
    }
    if (!key.empty()) key += " + ";
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (k) key += "*";
      key += "X" + std::to_string(m[k]);
    }
  }
  if (has_constant) key += key.empty() ? "1" : " + 1";
  return key.empty() ? "0" : key;
}

inline double logistic(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

/// Clamped logistic of the raw formula value; NaN if the value is not finite.
inline double sr_predict(const ExprTree& tree, std::span<const double> x) {
  double v = tree.eval(x);
  if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  return clamp_prob(logistic(v));
}

class SrStudent final : public Student {
 public:
  explicit SrStudent(ExprTree tree) : tree_(std::move(tree)), key_(canonicalize(tree_)) {}

  double predict_proba(std::span<const double> x) const override { return sr_predict(tree_, x); }
  std::string structure_key() const override { return key_; }
  int complexity() const override { return tree_.depth(); }
  const ExprTree& tree() const noexcept { return tree_; }

 private:
  ExprTree tree_;
  std::string key_;
};

struct GpConfig {
  std::size_t population = 2000;
  std::size_t generations = 20;
  std::size_t tournament_size = 20;
  double p_crossover = 0.8;
  double p_mutation = 0.15;
  int max_depth = 3;
  double const_range = 1.0;  ///< constants drawn from U[-const_range, const_range]
  std::uint64_t seed = 0;

  void validate() const {
    if (population < 2) throw DomainError("GpConfig: population must be at least 2");
    if (tournament_size == 0) throw DomainError("GpConfig: tournament_size must be positive");
    if (max_depth < 0) throw DomainError("GpConfig: max_depth must be non-negative");
    if (p_crossover < 0 || p_mutation < 0 || p_crossover + p_mutation > 1.0 + 1e-12) {
      throw DomainError("GpConfig: need p_crossover, p_mutation >= 0 and p_crossover + p_mutation <= 1");
    }
  }
};

struct GpResult {
  std::vector<ExprTree> population;
  std::vector<double> fitness;       ///< final generation, lower is better
  std::vector<double> best_history;  ///< best fitness per generation, initial population first

  std::size_t best_index() const {
    return static_cast<std::size_t>(std::min_element(fitness.begin(), fitness.end()) - fitness.begin());
  }
};

namespace detail {

inline ExprTree random_tree(Rng& rng, int n_features, int max_depth, bool full, double const_range) {
  std::vector<ExprNode> nodes;
  std::uniform_real_distribution<double> cst(-const_range, const_range);
  auto grow = [&](auto&& self, int depth_left) -> void {
    bool op = depth_left > 0 && (full || uniform01(rng) < 0.5);
    if (op) {
      nodes.push_back(uniform01(rng) < 0.5 ? ExprNode::add() : ExprNode::mul());
      self(self, depth_left - 1);
      self(self, depth_left - 1);
    } else if (n_features > 0 && uniform01(rng) < 0.75) {
      nodes.push_back(ExprNode::variable(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_features)))));
    } else {
      nodes.push_back(ExprNode::constant(cst(rng)));
    }
  };
  grow(grow, max_depth);
  return ExprTree(std::move(nodes));
}

inline double sr_fitness(const ExprTree& tree, const std::vector<std::vector<double>>& cols, const std::vector<int>& y) {
  auto v = tree.eval_columns(cols, y.size());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(v[i])) return std::numeric_limits<double>::infinity();
    double p = clamp_prob(logistic(v[i]));
    total -= y[i] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(y.size());
}

}  // namespace detail

/// Tournament-selection GP. Generation 0 is ramped half-and-half over depths
/// 0..max_depth. Each child comes from subtree crossover (p_crossover),
/// mutation (p_mutation, point or subtree with equal odds) or reproduction.
/// Children deeper than max_depth are rejected in favour of the parent. The
/// best individual is copied unchanged into every next generation.
inline GpResult evolve(const Dataset& corpus, const GpConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw FitError("evolve: corpus is empty");
  const int d = static_cast<int>(corpus.cols());
  std::vector<std::vector<double>> cols(corpus.cols());
  for (std::size_t j = 0; j < corpus.cols(); ++j) cols[j] = corpus.column(j);

  Rng rng = make_rng(cfg.seed);
  GpResult res;
  res.population.reserve(cfg.population);
  for (std::size_t i = 0; i < cfg.population; ++i) {
    int depth = static_cast<int>(i % static_cast<std::size_t>(cfg.max_depth + 1));
    res.population.push_back(detail::random_tree(rng, d, depth, i % 2 == 0, cfg.const_range));
  }

  auto score = [&](std::vector<double>& fit) {
    fit.assign(res.population.size(), 0.0);
    parallel_for(res.population.size(), [&](std::size_t i) {
      double f = detail::sr_fitness(res.population[i], cols, corpus.y);
      fit[i] = std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
    });
  };
  score(res.fitness);
  res.best_history.push_back(*std::min_element(res.fitness.begin(), res.fitness.end()));

  auto tournament = [&]() -> const ExprTree& {
    std::size_t best = uniform_index(rng, res.population.size());
    for (std::size_t k = 1; k < cfg.tournament_size; ++k) {
      std::size_t c = uniform_index(rng, res.population.size());
      if (res.fitness[c] < res.fitness[best] || (res.fitness[c] == res.fitness[best] && c < best)) best = c;
    }
    return res.population[best];
  };

  for (std::size_t g = 0; g < cfg.generations; ++g) {
    std::vector<ExprTree> next;
    next.reserve(cfg.population);
    next.push_back(res.population[res.best_index()]);
    while (next.size() < cfg.population) {
      const ExprTree& parent = tournament();
      double u = uniform01(rng);
      ExprTree child = parent;
      if (u < cfg.p_crossover) {
        const ExprTree& donor = tournament();
        std::size_t at = uniform_index(rng, parent.size());
        child = parent.replace(at, donor.subtree(uniform_index(rng, donor.size())));
      } else if (u < cfg.p_crossover + cfg.p_mutation) {
        std::size_t at = uniform_index(rng, parent.size());
        if (uniform01(rng) < 0.5) {
          std::vector<ExprNode> nodes = parent.nodes();
          ExprNode& n = nodes[at];
          if (n.is_op()) {
            n.kind = n.kind == ExprKind::add ? ExprKind::mul : ExprKind::add;
          } else {
            n = detail::random_tree(rng, d, 0, false, cfg.const_range).nodes()[0];
          }
          child = ExprTree(std::move(nodes));
        } else {
          int room = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.max_depth + 1)));
          child = parent.replace(at, detail::random_tree(rng, d, room, false, cfg.const_range));
        }
      }
      if (child.depth() > cfg.max_depth) child = parent;
      next.push_back(std::move(child));
    }
    res.population = std::move(next);
    score(res.fitness);
    res.best_history.push_back(*std::min_element(res.fitness.begin(), res.fitness.end()));
  }
  return res;
}

/// Evolves one population on a corpus of size n drawn with index first_index
/// and returns the final generation as candidates.
inline std::vector<Candidate> sr_candidates(const CorpusSource& source, std::size_t n, const GpConfig& cfg,
                                            std::uint64_t first_index = 1) {
  Dataset corpus = source.draw(n, first_index);
  GpConfig c = cfg;
  c.seed = derive_seed(cfg.seed, {first_index});
  GpResult res = evolve(corpus, c);
  std::vector<Candidate> out;
  out.reserve(res.population.size());
  for (std::size_t i = 0; i < res.population.size(); ++i) {
    out.push_back(make_candidate(std::make_shared<SrStudent>(std::move(res.population[i])), Family::sr, i));
  }
  return out;
}

}  // namespace distill
