#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/parallel.hpp"

namespace distill {

/// Student probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon]
/// before they reach the cross-entropy loss.
inline constexpr double kProbEpsilon = 1e-6;

inline double clamp_prob(double p) {
  if (std::isnan(p)) return p;
  return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

enum class Family { dt, frl, sr, synthetic };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::dt: return "dt";
    case Family::frl: return "frl";
    case Family::sr: return "sr";
    case Family::synthetic: return "synthetic";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "dt" || s == "DT") return Family::dt;
  if (s == "frl" || s == "FRL") return Family::frl;
  if (s == "sr" || s == "SR") return Family::sr;
  throw DomainError("unknown student family '" + s + "' (expected dt|frl|sr)");
}

/// A trained interpretable model.
class Student {
 public:
  virtual ~Student() = default;
  /// Raw probability that the label is 1 (not yet clamped).
  virtual double predict_proba(std::span<const double> x) const = 0;
  virtual std::string structure_key() const = 0;
  virtual int complexity() const = 0;
};

struct Candidate {
  std::shared_ptr<const Student> model;
  std::string key;
  int complexity = 0;
  Family family = Family::synthetic;
  std::size_t order = 0;  ///< generation order, used for tie-breaking

  double predict(std::span<const double> x) const { return clamp_prob(model->predict_proba(x)); }
};

inline Candidate make_candidate(std::shared_ptr<const Student> model, Family family, std::size_t order) {
  Candidate c;
  c.key = model->structure_key();
  c.complexity = model->complexity();
  c.model = std::move(model);
  c.family = family;
  c.order = order;
  return c;
}

/// Candidates sharing one structure key. `representative` indexes into
/// `members` once select_representatives has run.
struct EquivalenceClass {
  std::string key;
  std::vector<Candidate> members;
  std::size_t representative = 0;
  double representative_loss = std::numeric_limits<double>::quiet_NaN();

  const Candidate& rep() const { return members.at(representative); }
};

/// Groups candidates by structure key. Classes come out in lexicographic key
/// order; members keep their input order.
inline std::vector<EquivalenceClass> partition(const std::vector<Candidate>& candidates) {
  std::map<std::string, std::vector<Candidate>> by_key;
  for (const auto& c : candidates) by_key[c.key].push_back(c);
  std::vector<EquivalenceClass> out;
  out.reserve(by_key.size());
  for (auto& [key, members] : by_key) {
    EquivalenceClass cls;
    cls.key = key;
    cls.members = std::move(members);
    out.push_back(std::move(cls));
  }
  return out;
}

using LossFn = std::function<double(int label, double prob)>;

/// Average loss of one candidate over a labelled corpus.
inline double average_loss(const Candidate& c, const Dataset& corpus, const LossFn& loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < corpus.rows; ++i) total += loss(corpus.y[i], c.predict(corpus.row(i)));
  return total / static_cast<double>(corpus.rows);
}

/// Picks the loss-minimal member of each class on the evaluation corpus.
/// Ties go to the member generated first. Members whose loss is not finite
/// are skipped; a class with no finite member is an error.
inline std::vector<EquivalenceClass> select_representatives(std::vector<EquivalenceClass> classes,
                                                            const Dataset& eval_corpus, const LossFn& loss) {
  if (eval_corpus.empty()) throw EvaluationError("select_representatives: evaluation corpus is empty");

  // Members often share one fitted model (e.g. repeated MCMC states).
  std::vector<const Student*> models;
  std::unordered_map<const Student*, std::size_t> slot;
  for (const auto& cls : classes) {
    for (const auto& m : cls.members) {
      if (slot.emplace(m.model.get(), models.size()).second) models.push_back(m.model.get());
    }
  }
  std::vector<double> losses(models.size());
  parallel_for(models.size(), [&](std::size_t k) {
    double total = 0.0;
    for (std::size_t i = 0; i < eval_corpus.rows; ++i) {
      double p = models[k]->predict_proba(eval_corpus.row(i));
      if (std::isnan(p)) {
        total = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      total += loss(eval_corpus.y[i], clamp_prob(p));
    }
    losses[k] = total / static_cast<double>(eval_corpus.rows);
  });

  for (auto& cls : classes) {
    bool found = false;
    for (std::size_t m = 0; m < cls.members.size(); ++m) {
      double l = losses[slot.at(cls.members[m].model.get())];
      if (!std::isfinite(l)) continue;
      bool earlier = cls.members[m].order < cls.members[cls.representative].order;
      if (!found || l < cls.representative_loss || (l == cls.representative_loss && earlier)) {
        cls.representative = m;
        cls.representative_loss = l;
        found = true;
      }
    }
    if (!found) throw EvaluationError("select_representatives: no member of class '" + cls.key + "' has a finite loss");
  }
  return classes;
}

}  // namespace distill
