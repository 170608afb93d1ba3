#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/parallel.hpp"
#include "distill/rng.hpp"
#include "distill/sampler.hpp"
#include "distill/student.hpp"

namespace distill {

/// Conjunction of positive literals "feature == 1". Features are sorted.
struct Antecedent {
  std::vector<std::size_t> features;
  std::size_t support = 0;  ///< matching rows in the mining corpus

  bool matches(std::span<const double> x) const {
    for (auto f : features) {
      if (x[f] < 0.5) return false;
    }
    return true;
  }
  bool operator==(const Antecedent& o) const { return features == o.features; }
};

struct AntecedentPool {
  std::vector<Antecedent> antecedents;
  std::shared_ptr<const std::vector<std::string>> feature_names;
  std::size_t rows = 0;

  std::size_t size() const noexcept { return antecedents.size(); }
};

inline std::shared_ptr<const std::vector<std::string>> column_names(const FeatureSchema& schema) {
  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& c : schema.columns()) names->push_back(c.name);
  return names;
}

/// Enumerates every conjunction of up to max_literals binary features whose
/// empirical support is at least min_support. Order: by length, then by
/// feature indices.
inline AntecedentPool mine_antecedents(const Dataset& corpus, double min_support, std::size_t max_literals = 2) {
  if (corpus.empty()) throw MiningError("mine_antecedents: corpus is empty");
  if (!(min_support >= 0.0 && min_support <= 1.0)) throw DomainError("mine_antecedents: min_support must lie in [0, 1]");
  if (max_literals == 0 || max_literals > 3) throw DomainError("mine_antecedents: max_literals must be 1, 2 or 3");
  for (std::size_t j = 0; j < corpus.cols(); ++j) {
    for (std::size_t i = 0; i < corpus.rows; ++i) {
      double v = corpus.at(i, j);
      if (v != 0.0 && v != 1.0) {
        throw DomainError("mine_antecedents: feature '" + corpus.schema[j].name + "' is not binary");
      }
    }
  }

  AntecedentPool pool;
  pool.feature_names = column_names(corpus.schema);
  pool.rows = corpus.rows;
  const std::size_t d = corpus.cols();
  const double need = min_support * static_cast<double>(corpus.rows);

  auto support = [&](const std::vector<std::size_t>& feats) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < corpus.rows; ++i) {
      bool all = true;
      for (auto f : feats) all = all && corpus.at(i, f) == 1.0;
      s += all;
    }
    return s;
  };
  auto consider = [&](std::vector<std::size_t> feats) {
    std::size_t s = support(feats);
    if (static_cast<double>(s) >= need - 1e-9) pool.antecedents.push_back({std::move(feats), s});
  };

  for (std::size_t a = 0; a < d; ++a) consider({a});
  if (max_literals >= 2) {
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b) consider({a, b});
  }
  if (max_literals >= 3) {
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        for (std::size_t c = b + 1; c < d; ++c) consider({a, b, c});
  }
  if (pool.antecedents.empty()) {
    throw MiningError("mine_antecedents: no antecedent reaches min_support " + std::to_string(min_support) +
                      "; try a lower min_support");
  }
  return pool;
}

/// Ordered if-then list with non-increasing risk scores. risks has one entry
/// per clause plus the default risk.
struct RuleList {
  std::vector<Antecedent> clauses;
  std::vector<double> risks;

  std::size_t length() const noexcept { return clauses.size(); }

  /// Index of the first matching clause, or length() for the default rule.
  std::size_t route(std::span<const double> x) const {
    for (std::size_t h = 0; h < clauses.size(); ++h) {
      if (clauses[h].matches(x)) return h;
    }
    return clauses.size();
  }

  double predict_proba(std::span<const double> x) const { return 1.0 / (1.0 + std::exp(-risks[route(x)])); }

  bool risks_monotone() const {
    if (risks.size() != clauses.size() + 1) return false;
    for (std::size_t h = 0; h + 1 < risks.size(); ++h) {
      if (risks[h + 1] > risks[h]) return false;
    }
    return true;
  }
};

/// "[IllDefinedMargin, Age≥60],[IrregularShape],[SpiculatedMargin]".
/// Literals inside a clause are ordered by feature index; risks are omitted.
inline std::string frl_structure_key(const RuleList& list, const std::vector<std::string>& names) {
  if (list.clauses.empty()) return "[]";
  std::string key;
  for (std::size_t h = 0; h < list.clauses.size(); ++h) {
    if (h) key += ",";
    key += "[";
    auto feats = list.clauses[h].features;
    std::sort(feats.begin(), feats.end());
    for (std::size_t k = 0; k < feats.size(); ++k) {
      if (k) key += ", ";
      key += names.at(feats[k]);
    }
    key += "]";
  }
  return key;
}

class FrlStudent final : public Student {
 public:
  FrlStudent(RuleList list, std::shared_ptr<const std::vector<std::string>> names)
      : list_(std::move(list)), names_(std::move(names)) {}

  double predict_proba(std::span<const double> x) const override { return list_.predict_proba(x); }
  std::string structure_key() const override { return frl_structure_key(list_, *names_); }
  int complexity() const override { return static_cast<int>(list_.length()); }
  const RuleList& list() const noexcept { return list_; }

 private:
  RuleList list_;
  std::shared_ptr<const std::vector<std::string>> names_;
};

/// Pool-adjacent-violators projection onto non-increasing sequences.
inline std::vector<double> isotonic_nonincreasing(std::span<const double> values, std::span<const double> weights) {
  struct Block {
    double mean, weight;
    std::size_t len;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean < blocks.back().mean) {
      Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      double w = a.weight + b.weight;
      a.mean = (a.mean * a.weight + b.mean * b.weight) / w;
      a.weight = w;
      a.len += b.len;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) out.insert(out.end(), b.len, b.mean);
  return out;
}

struct FrlOptions {
  double min_support = 0.05;
  std::size_t max_literals = 2;
  double length_decay = 0.5;  ///< geometric prior on list length
};

/// Unnormalised log posterior over rule lists built from a fixed pool.
///
/// Risks are a plug-in function of the list: per-segment Laplace-smoothed
/// log-odds log((pos + 1) / (neg + 1)), projected onto non-increasing
/// sequences with weights (count + 2). The likelihood is Bernoulli with
/// logistic risks. The prior is geometric(length_decay) on the length,
/// uniform over ordered lists of that length.
class FrlPosterior {
 public:
  FrlPosterior(const Dataset& corpus, const AntecedentPool& pool, std::size_t max_length, double length_decay = 0.5)
      : max_length_(max_length), log_decay_(std::log(length_decay)), pool_size_(pool.size()) {
    if (!(length_decay > 0.0 && length_decay <= 1.0)) throw DomainError("FrlPosterior: length_decay must lie in (0, 1]");
    words_ = (corpus.rows + 63) / 64;
    labels_.assign(words_, 0);
    all_.assign(words_, 0);
    for (std::size_t i = 0; i < corpus.rows; ++i) {
      all_[i / 64] |= std::uint64_t{1} << (i % 64);
      if (corpus.y[i]) labels_[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    masks_.resize(pool.size());
    for (std::size_t a = 0; a < pool.size(); ++a) {
      masks_[a].assign(words_, 0);
      for (std::size_t i = 0; i < corpus.rows; ++i) {
        if (pool.antecedents[a].matches(corpus.row(i))) masks_[a][i / 64] |= std::uint64_t{1} << (i % 64);
      }
    }
  }

  std::size_t pool_size() const noexcept { return pool_size_; }
  std::size_t max_length() const noexcept { return max_length_; }

  struct Evaluation {
    double log_posterior = 0.0;
    std::vector<double> risks;
  };

  Evaluation evaluate(std::span<const std::size_t> list) const {
    const std::size_t h_len = list.size();
    std::vector<double> pos(h_len + 1), cnt(h_len + 1);
    std::vector<std::uint64_t> remaining = all_;
    for (std::size_t h = 0; h <= h_len; ++h) {
      std::size_t c = 0, p = 0;
      for (std::size_t w = 0; w < words_; ++w) {
        std::uint64_t seg = h < h_len ? remaining[w] & masks_[list[h]][w] : remaining[w];
        c += static_cast<std::size_t>(std::popcount(seg));
        p += static_cast<std::size_t>(std::popcount(seg & labels_[w]));
        if (h < h_len) remaining[w] &= ~masks_[list[h]][w];
      }
      pos[h] = static_cast<double>(p);
      cnt[h] = static_cast<double>(c);
    }
    std::vector<double> logodds(h_len + 1), weight(h_len + 1);
    for (std::size_t h = 0; h <= h_len; ++h) {
      logodds[h] = std::log((pos[h] + 1.0) / (cnt[h] - pos[h] + 1.0));
      weight[h] = cnt[h] + 2.0;
    }
    Evaluation ev;
    ev.risks = isotonic_nonincreasing(logodds, weight);
    double loglik = 0.0;
    for (std::size_t h = 0; h <= h_len; ++h) {
      double r = ev.risks[h];
      // log sigmoid(r) and log sigmoid(-r), computed stably
      double log_p = -std::log1p(std::exp(-std::abs(r))) + std::min(r, 0.0);
      double log_q = -std::log1p(std::exp(-std::abs(r))) + std::min(-r, 0.0);
      loglik += pos[h] * log_p + (cnt[h] - pos[h]) * log_q;
    }
    ev.log_posterior = loglik + log_prior(h_len);
    return ev;
  }

  /// log P(list) up to a constant: H log(decay) - log(K! / (K - H)!).
  double log_prior(std::size_t h_len) const {
    double lp = static_cast<double>(h_len) * log_decay_;
    for (std::size_t i = 0; i < h_len; ++i) lp -= std::log(static_cast<double>(pool_size_ - i));
    return lp;
  }

 private:
  std::size_t max_length_;
  double log_decay_;
  std::size_t pool_size_;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> labels_, all_;
  std::vector<std::vector<std::uint64_t>> masks_;
};

/// Metropolis-Hastings chain over ordered lists of distinct pool antecedents
/// with length <= max_length. Moves: insert, delete, swap adjacent, replace;
/// the move type is uniform over those available in the current state. Risk
/// scores are refreshed from the posterior after every accepted move.
class FrlChain {
 public:
  enum class Move { insert, remove, swap, replace };

  FrlChain(const FrlPosterior& posterior, std::uint64_t seed) : post_(posterior), rng_(make_rng(seed)) {
    current_ = post_.evaluate(state_);
  }

  const std::vector<std::size_t>& state() const noexcept { return state_; }
  const std::vector<double>& risks() const noexcept { return current_.risks; }
  double log_posterior() const noexcept { return current_.log_posterior; }
  std::size_t accepted() const noexcept { return accepted_; }

  /// One MH transition. Returns true when the proposal was accepted.
  bool step() {
    const std::size_t h = state_.size();
    const std::size_t k = post_.pool_size();
    auto moves = available(h);
    Move mv = moves[uniform_index(rng_, moves.size())];

    std::vector<std::size_t> next = state_;
    double log_q_forward = -std::log(static_cast<double>(moves.size()));
    std::size_t h_next = h;
    switch (mv) {
      case Move::insert: {
        auto unused = unused_antecedents();
        std::size_t a = unused[uniform_index(rng_, unused.size())];
        std::size_t pos = uniform_index(rng_, h + 1);
        next.insert(next.begin() + static_cast<std::ptrdiff_t>(pos), a);
        log_q_forward -= std::log(static_cast<double>((k - h) * (h + 1)));
        h_next = h + 1;
        break;
      }
      case Move::remove: {
        std::size_t pos = uniform_index(rng_, h);
        next.erase(next.begin() + static_cast<std::ptrdiff_t>(pos));
        log_q_forward -= std::log(static_cast<double>(h));
        h_next = h - 1;
        break;
      }
      case Move::swap: {
        std::size_t pos = uniform_index(rng_, h - 1);
        std::swap(next[pos], next[pos + 1]);
        log_q_forward -= std::log(static_cast<double>(h - 1));
        break;
      }
      case Move::replace: {
        auto unused = unused_antecedents();
        std::size_t pos = uniform_index(rng_, h);
        next[pos] = unused[uniform_index(rng_, unused.size())];
        log_q_forward -= std::log(static_cast<double>(h * (k - h)));
        break;
      }
    }
    double log_q_reverse = -std::log(static_cast<double>(available(h_next).size()));
    switch (mv) {
      case Move::insert: log_q_reverse -= std::log(static_cast<double>(h_next)); break;
      case Move::remove: log_q_reverse -= std::log(static_cast<double>((k - h_next) * (h_next + 1))); break;
      case Move::swap: log_q_reverse -= std::log(static_cast<double>(h - 1)); break;
      case Move::replace: log_q_reverse -= std::log(static_cast<double>(h * (k - h))); break;
    }

    auto proposal = post_.evaluate(next);
    double log_ratio = proposal.log_posterior - current_.log_posterior + log_q_reverse - log_q_forward;
    bool accept = log_ratio >= 0.0 || std::log(uniform01(rng_)) < log_ratio;
    if (accept) {
      state_ = std::move(next);
      current_ = std::move(proposal);
      ++accepted_;
    }
    for (std::size_t i = 0; i + 1 < current_.risks.size(); ++i) {
      if (current_.risks[i + 1] > current_.risks[i]) throw std::logic_error("FrlChain: risk scores not monotone");
    }
    return accept;
  }

 private:
  std::vector<Move> available(std::size_t h) const {
    const std::size_t k = post_.pool_size();
    std::vector<Move> moves;
    if (h < post_.max_length() && h < k) moves.push_back(Move::insert);
    if (h >= 1) moves.push_back(Move::remove);
    if (h >= 2) moves.push_back(Move::swap);
    if (h >= 1 && h < k) moves.push_back(Move::replace);
    return moves;
  }

  std::vector<std::size_t> unused_antecedents() const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < post_.pool_size(); ++a) {
      if (std::find(state_.begin(), state_.end(), a) == state_.end()) out.push_back(a);
    }
    return out;
  }

  const FrlPosterior& post_;
  Rng rng_;
  std::vector<std::size_t> state_;
  FrlPosterior::Evaluation current_;
  std::size_t accepted_ = 0;
};

/// Runs one chain from the empty list and emits every visited state (one per
/// step) as a candidate. complexity = list length.
inline std::vector<Candidate> sample_frl_trajectory(const Dataset& corpus, const AntecedentPool& pool,
                                                    std::size_t max_length, std::size_t steps, std::uint64_t seed,
                                                    double length_decay = 0.5, std::size_t first_order = 0) {
  if (steps == 0) throw DomainError("sample_frl_trajectory: steps must be positive");
  if (max_length == 0) throw DomainError("sample_frl_trajectory: C must be positive");
  FrlPosterior posterior(corpus, pool, max_length, length_decay);
  FrlChain chain(posterior, seed);
  std::vector<Candidate> out;
  out.reserve(steps);
  std::shared_ptr<const FrlStudent> model;
  for (std::size_t s = 0; s < steps; ++s) {
    bool moved = chain.step();
    if (moved || !model) {
      RuleList list;
      for (auto a : chain.state()) list.clauses.push_back(pool.antecedents[a]);
      list.risks = chain.risks();
      model = std::make_shared<FrlStudent>(std::move(list), pool.feature_names);
    }
    out.push_back(make_candidate(model, Family::frl, first_order + s));
  }
  return out;
}

/// Union of P trajectories, each on its own corpus of size n drawn with
/// index first_index + p and mined independently.
inline std::vector<Candidate> frl_candidates(const CorpusSource& source, std::size_t n, std::size_t trajectories,
                                             std::size_t steps, std::size_t max_length, const FrlOptions& opts = {},
                                             std::uint64_t first_index = 1, std::uint64_t seed = 0) {
  if (trajectories == 0) throw DomainError("frl_candidates: P must be positive");
  std::vector<std::vector<Candidate>> parts(trajectories);
  parallel_for(trajectories, [&](std::size_t p) {
    Dataset corpus = source.draw(n, first_index + p);
    AntecedentPool pool = mine_antecedents(corpus, opts.min_support, opts.max_literals);
    parts[p] = sample_frl_trajectory(corpus, pool, max_length, steps, derive_seed(seed, {first_index + p}),
                                     opts.length_decay, p * steps);
  });
  std::vector<Candidate> out;
  out.reserve(trajectories * steps);
  for (auto& part : parts) out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  return out;
}

}  // namespace distill
