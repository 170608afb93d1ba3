#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "distill/distill.hpp"

namespace oracle {

inline long double phi_ref(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

// ---------------------------------------------------------------------------
// CART: brute-force best split of a whole dataset

struct BruteSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
  long double impurity = 0.0;  // size-weighted Gini
};

inline std::optional<BruteSplit> brute_best_split(const distill::Dataset& data) {
  const std::size_t n = data.rows;
  std::optional<BruteSplit> best;
  auto gini = [](long double cnt, long double pos) {
    if (cnt == 0) return 0.0L;
    long double p = pos / cnt;
    return 1.0L - p * p - (1.0L - p) * (1.0L - p);
  };
  for (std::size_t f = 0; f < data.cols(); ++f) {
    std::vector<double> vals = data.column(f);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      double t = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
      long double nl = 0, pl = 0, nr = 0, pr = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (data.at(i, f) <= t) {
          nl += 1;
          pl += data.y[i];
        } else {
          nr += 1;
          pr += data.y[i];
        }
      }
      long double imp = (nl * gini(nl, pl) + nr * gini(nr, pr)) / static_cast<long double>(n);
      if (!best || imp < best->impurity - 1e-12L) best = BruteSplit{f, t, imp};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Polynomials: coefficient map built by brute-force multiplication of
// dense term lists.

using Poly = std::map<std::vector<int>, double>;

inline Poly poly_var(int j) { return {{{j}, 1.0}}; }
inline Poly poly_const(double c) { return {{{}, c}}; }
inline Poly poly_add(const Poly& a, const Poly& b) {
  Poly out = a;
  for (const auto& [m, c] : b) out[m] += c;
  return out;
}
inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ma, ca] : a) {
    for (const auto& [mb, cb] : b) {
      std::vector<int> m;
      std::merge(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(m));
      out[m] += ca * cb;
    }
  }
  return out;
}

/// Key from a coefficient map: monomials in index order, constant last.
inline std::string poly_key(const Poly& p) {
  double scale = 0;
  for (const auto& [m, c] : p) scale = std::max(scale, std::abs(c));
  std::vector<std::string> parts;
  bool constant = false;
  for (const auto& [m, c] : p) {
    if (std::abs(c) <= 1e-9 * (1 + scale)) continue;
    if (m.empty()) {
      constant = true;
      continue;
    }
    std::string s;
    for (std::size_t k = 0; k < m.size(); ++k) s += (k ? "*X" : "X") + std::to_string(m[k]);
    parts.push_back(s);
  }
  if (constant) parts.push_back("1");
  if (parts.empty()) return "0";
  std::string out = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) out += " + " + parts[k];
  return out;
}

// ---------------------------------------------------------------------------
// FRL: exact posterior over every ordered list of distinct antecedents.

inline std::vector<double> pava_reference(std::vector<double> v, std::vector<double> w) {
  // Repeatedly pool the first adjacent violation until none remains.
  std::vector<std::size_t> len(v.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      if (v[i] < v[i + 1]) {
        v[i] = (v[i] * w[i] + v[i + 1] * w[i + 1]) / (w[i] + w[i + 1]);
        w[i] += w[i + 1];
        len[i] += len[i + 1];
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i + 1));
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(i + 1));
        len.erase(len.begin() + static_cast<std::ptrdiff_t>(i + 1));
        changed = true;
        break;
      }
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.insert(out.end(), len[i], v[i]);
  return out;
}

inline double frl_log_posterior(const distill::Dataset& corpus, const distill::AntecedentPool& pool,
                                const std::vector<std::size_t>& list, double decay = 0.5) {
  const std::size_t h = list.size();
  std::vector<double> pos(h + 1, 0), cnt(h + 1, 0);
  for (std::size_t i = 0; i < corpus.rows; ++i) {
    std::size_t seg = h;
    for (std::size_t k = 0; k < h; ++k) {
      bool all = true;
      for (auto f : pool.antecedents[list[k]].features) all = all && corpus.at(i, f) == 1.0;
      if (all) {
        seg = k;
        break;
      }
    }
    cnt[seg] += 1;
    pos[seg] += corpus.y[i];
  }
  std::vector<double> lo(h + 1), w(h + 1);
  for (std::size_t k = 0; k <= h; ++k) {
    lo[k] = std::log((pos[k] + 1) / (cnt[k] - pos[k] + 1));
    w[k] = cnt[k] + 2;
  }
  auto r = pava_reference(lo, w);
  double ll = 0;
  for (std::size_t k = 0; k <= h; ++k) {
    double p = 1 / (1 + std::exp(-r[k]));
    ll += pos[k] * std::log(p) + (cnt[k] - pos[k]) * std::log(1 - p);
  }
  double prior = static_cast<double>(h) * std::log(decay);
  for (std::size_t k = 0; k < h; ++k) prior -= std::log(static_cast<double>(pool.size() - k));
  return ll + prior;
}

/// All ordered lists of distinct indices from [0, k) with length <= c.
inline std::vector<std::vector<std::size_t>> enumerate_lists(std::size_t k, std::size_t c) {
  std::vector<std::vector<std::size_t>> out{{}};
  for (std::size_t len = 1; len <= c; ++len) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& l : out) {
      if (l.size() != len - 1) continue;
      for (std::size_t a = 0; a < k; ++a) {
        if (std::find(l.begin(), l.end(), a) != l.end()) continue;
        auto m = l;
        m.push_back(a);
        next.push_back(m);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
  }
  return out;
}

/// Small binary dataset with two informative features for the FRL checks.
inline distill::Dataset frl_toy_corpus(std::size_t rows, std::uint64_t seed) {
  distill::Dataset d;
  d.schema.add_binary("A");
  d.schema.add_binary("B");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution half(0.5);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    double a = half(rng), b = half(rng);
    double p = a ? 0.8 : (b ? 0.5 : 0.2);
    d.push_row(std::vector<double>{a, b}, u(rng) < p);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic two-structure family

/// Predicts a fixed probability; its structure key is its name.
class ConstantStudent final : public distill::Student {
 public:
  ConstantStudent(double p, std::string key) : p_(p), key_(std::move(key)) {}
  double predict_proba(std::span<const double>) const override { return p_; }
  std::string structure_key() const override { return key_; }
  int complexity() const override { return 0; }

 private:
  double p_;
  std::string key_;
};

/// Corpora of one dummy feature with Bernoulli(rate) labels.
class BernoulliSource final : public distill::CorpusSource {
 public:
  BernoulliSource(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {}
  distill::Dataset draw(std::size_t n, std::uint64_t index) const override {
    distill::Dataset d;
    d.schema.add_continuous("x");
    d.rows = n;
    d.X.assign(n, 0.0);
    d.y.resize(n);
    auto rng = distill::make_rng(seed_, {index});
    std::bernoulli_distribution b(rate_);
    for (auto& y : d.y) y = b(rng);
    return d;
  }

 private:
  double rate_;
  std::uint64_t seed_;
};

/// Two constant predictors "A" (prob qa) and "B" (prob qb) for labels with
/// rate pi. Returns the standardized gap S = mu / sigma of the per-row loss
/// difference l_B - l_A.
inline double constant_pair_gap(double pi, double qa, double qb) {
  double e1 = std::log(qa / qb);              // y = 1: -log qb + log qa
  double e0 = std::log((1 - qa) / (1 - qb));  // y = 0
  double mu = pi * e1 + (1 - pi) * e0;
  double var = pi * (1 - pi) * (e1 - e0) * (e1 - e0);
  return mu / std::sqrt(var);
}

inline distill::CandidateGenerator constant_pair_generator(double qa, double qb) {
  auto a = std::make_shared<ConstantStudent>(qa, "A");
  auto b = std::make_shared<ConstantStudent>(qb, "B");
  return [a, b](const distill::CorpusSource&, std::size_t, std::uint64_t) {
    return std::vector<distill::Candidate>{distill::make_candidate(a, distill::Family::synthetic, 0),
                                           distill::make_candidate(b, distill::Family::synthetic, 1)};
  };
}

}  // namespace oracle
