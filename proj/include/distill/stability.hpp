#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/parallel.hpp"
#include "distill/sampler.hpp"
#include "distill/stat_kernel.hpp"
#include "distill/student.hpp"

namespace distill {

/// Negative log-likelihood of a binary label under a clamped probability.
inline double cross_entropy_loss(int y, double p) {
  constexpr double slack = 1e-15;
  if (!(p >= kProbEpsilon - slack && p <= 1.0 - kProbEpsilon + slack)) {
    throw DomainError("cross_entropy_loss: probability " + std::to_string(p) + " outside the clamp range");
  }
  return y ? -std::log(p) : -std::log1p(-p);
}

/// One-sided p-value 1 - Phi(sqrt(n) d / sqrt(2 s2)). A zero variance gives 0.
inline double pvalue(double n, double d, double s2) {
  if (s2 <= 0.0) return 0.0;
  return normal_upper_tail(std::sqrt(n) * d / std::sqrt(2.0 * s2));
}

struct GapRow {
  std::string key;
  double d = 0.0;
  double sigma_hat = 0.0;
  double p = 0.0;
  bool merged = false;  ///< identical predictions to the best representative
};

struct LossGapTable {
  std::string best_key;
  std::size_t best_class = 0;
  double best_loss = 0.0;
  std::size_t n = 0;
  std::vector<GapRow> rows;

  double sum_p() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.p;
    return s;
  }
  /// Sum of p-values with d and sigma frozen but the corpus size set to n.
  double sum_p_at(double n_new) const {
    double s = 0.0;
    for (const auto& r : rows) s += r.merged ? 0.0 : pvalue(n_new, r.d, r.sigma_hat * r.sigma_hat);
    return s;
  }
};

/// Builds the gap table of every class representative against the loss-best
/// one. Classes are assumed to come in key order, so a loss tie for best goes
/// to the lexicographically smaller key.
inline LossGapTable gap_table(const std::vector<EquivalenceClass>& classes, const Dataset& corpus,
                              const LossFn& loss = cross_entropy_loss) {
  if (corpus.empty()) throw EvaluationError("gap_table: corpus is empty");
  if (classes.empty()) throw EvaluationError("gap_table: no representatives");
  const std::size_t n = corpus.rows;
  const std::size_t m = classes.size();

  std::vector<std::vector<double>> per_row(m, std::vector<double>(n));
  std::vector<double> mean(m, 0.0);
  parallel_for(m, [&](std::size_t c) {
    const Candidate& rep = classes[c].rep();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      per_row[c][i] = loss(corpus.y[i], rep.predict(corpus.row(i)));
      total += per_row[c][i];
    }
    mean[c] = total / static_cast<double>(n);
  });

  LossGapTable table;
  table.n = n;
  std::size_t best = 0;
  for (std::size_t c = 1; c < m; ++c) {
    if (mean[c] < mean[best] || (mean[c] == mean[best] && classes[c].key < classes[best].key)) best = c;
  }
  table.best_class = best;
  table.best_key = classes[best].key;
  table.best_loss = mean[best];

  std::vector<double> diff(n);
  for (std::size_t c = 0; c < m; ++c) {
    if (c == best) continue;
    GapRow row;
    row.key = classes[c].key;
    row.d = mean[c] - mean[best];
    double s2 = 0.0;
    if (n >= 2) {
      for (std::size_t i = 0; i < n; ++i) diff[i] = per_row[c][i] - per_row[best][i];
      s2 = mean_var(diff).var;
    }
    row.sigma_hat = std::sqrt(s2);
    row.merged = s2 <= 0.0 && row.d == 0.0;
    row.p = pvalue(static_cast<double>(n), row.d, s2);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline bool bonferroni_pass(const LossGapTable& table, double alpha) { return table.sum_p() <= alpha; }

/// Smallest n with 1 - Phi(sqrt(n) d / sqrt(2 s2)) <= alpha. No value exists
/// when d = 0.
inline std::optional<std::size_t> required_n(double d, double sigma_sq, double alpha) {
  if (d < 0.0 || sigma_sq < 0.0) throw DomainError("required_n: d and sigma^2 must be non-negative");
  if (d == 0.0) return std::nullopt;
  if (sigma_sq == 0.0) return std::size_t{1};
  const double z = z_quantile(alpha);
  const double bound = 2.0 * z * z * sigma_sq / (d * d);
  if (!(bound < 1e18)) return std::nullopt;
  auto n = static_cast<std::size_t>(std::floor(bound)) + 1;
  while (pvalue(static_cast<double>(n), d, sigma_sq) > alpha) ++n;
  return n;
}

struct StabilityConfig {
  double alpha = 0.05;
  std::size_t n_init = 1000;
  std::size_t n_max = 100000;
  double rate = 0.1;  ///< linear-search step L
  int complexity = 3;  ///< C

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
    if (n_init == 0) throw DomainError("n_init must be positive");
    if (n_init > n_max) throw DomainError("n_init must not exceed n_max");
    if (!(rate > 0.0)) throw DomainError("linear-search rate L must be positive");
    if (complexity <= 0) throw DomainError("complexity cap C must be positive");
  }
};

/// Smallest n' = ceil((1 + tL) n), t = 1, 2, ..., whose frozen-gap p-value
/// sum is <= alpha, capped at n_max.
inline std::size_t linear_search_n(const LossGapTable& table, std::size_t n, const StabilityConfig& cfg) {
  for (std::size_t t = 1;; ++t) {
    double target = static_cast<double>(n) * (1.0 + static_cast<double>(t) * cfg.rate);
    if (target >= static_cast<double>(cfg.n_max)) return cfg.n_max;
    auto n_new = static_cast<std::size_t>(std::ceil(target - 1e-9));
    if (table.sum_p_at(static_cast<double>(n_new)) <= cfg.alpha) return n_new;
  }
}

enum class StopReason { test_passed, n_max_reached, single_class, not_stabilized };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::test_passed: return "test-passed";
    case StopReason::n_max_reached: return "n_max-reached";
    case StopReason::single_class: return "single-class";
    case StopReason::not_stabilized: return "not-stabilized";
  }
  return "?";
}

struct RoundRecord {
  std::size_t round = 0;
  std::size_t n = 0;
  std::size_t classes = 0;  ///< M
  double sum_p = 0.0;
  std::string best_key;
  bool passed = false;
  std::size_t next_n = 0;  ///< 0 when the run stopped after this round
};

inline nlohmann::ordered_json to_json(const RoundRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["n"] = r.n;
  j["M"] = r.classes;
  j["sum_p"] = r.sum_p;
  j["best_key"] = r.best_key;
  j["passed"] = r.passed;
  if (r.next_n) j["next_n"] = r.next_n;
  return j;
}

struct StabilityState {
  std::size_t n = 0;
  std::size_t round = 0;
  StopReason stop_reason = StopReason::test_passed;
};

struct StabilityResult {
  Candidate winner;
  LossGapTable table;
  StabilityState state;
  std::vector<RoundRecord> audit;
};

/// Produces the candidate set at corpus size n. Corpora must be drawn with
/// indices first_index, first_index + 1, ...
using CandidateGenerator =
    std::function<std::vector<Candidate>(const CorpusSource& source, std::size_t n, std::uint64_t first_index)>;

inline constexpr std::uint64_t kRoundStride = std::uint64_t{1} << 32;

/// The generate / partition / evaluate / test loop. With stabilize = false a
/// single round runs at n_init and its best representative is returned.
inline StabilityResult run_stability(const CorpusSource& source, const CandidateGenerator& generate,
                                     const StabilityConfig& cfg, bool stabilize = true,
                                     const LossFn& loss = cross_entropy_loss) {
  cfg.validate();
  StabilityResult res;
  std::size_t n = cfg.n_init;
  for (std::size_t round = 0;; ++round) {
    const std::uint64_t base = round * kRoundStride;
    auto candidates = generate(source, n, base + 1);
    if (candidates.empty()) throw EvaluationError("candidate generator returned no candidates");
    Dataset eval = source.draw(n, base);
    auto classes = select_representatives(partition(candidates), eval, loss);
    LossGapTable table = gap_table(classes, eval, loss);

    RoundRecord rec;
    rec.round = round;
    rec.n = n;
    rec.classes = classes.size();
    rec.sum_p = table.sum_p();
    rec.best_key = table.best_key;
    rec.passed = bonferroni_pass(table, cfg.alpha);

    std::optional<StopReason> stop;
    if (!eval.has_both_labels()) {
      stop = StopReason::single_class;
    } else if (rec.passed) {
      stop = StopReason::test_passed;
    } else if (!stabilize) {
      stop = StopReason::not_stabilized;
    } else if (n >= cfg.n_max) {
      stop = StopReason::n_max_reached;
    }
    if (!stop) rec.next_n = linear_search_n(table, n, cfg);
    res.audit.push_back(rec);

    if (stop) {
      res.winner = classes[table.best_class].rep();
      res.table = std::move(table);
      res.state = {n, round, *stop};
      return res;
    }
    n = rec.next_n;
  }
}

}  // namespace distill
