#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/forest.hpp"
#include "distill/rng.hpp"
#include "distill/stat_kernel.hpp"

namespace distill {

enum class SamplerStrategy { kernel_smoother, independent_gaussian };

struct SamplerSpec {
  SamplerStrategy strategy = SamplerStrategy::kernel_smoother;
  double bandwidth = 2.0;
  double flip_prob = 0.1;
  double group_switch_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(bandwidth >= 0.0)) throw DomainError("sampler: bandwidth must be >= 0");
    if (!is_prob(flip_prob)) throw DomainError("sampler: flip_prob must lie in [0, 1]");
    if (!is_prob(group_switch_prob)) throw DomainError("sampler: group_switch_prob must lie in [0, 1]");
  }
};

/// Teacher labelling function.
using LabelFn = std::function<int(std::span<const double>)>;

inline LabelFn teacher_labels(const Forest& teacher) {
  return [&teacher](std::span<const double> x) { return predict_label(teacher, x); };
}

namespace detail {

struct RowHash {
  std::size_t operator()(const std::vector<double>& v) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      h = splitmix64(h ^ bits);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Index of the active member of a group, or members.size() for the
/// reference level.
inline std::size_t active_member(const OneHotGroup& g, std::span<const double> row) {
  for (std::size_t k = 0; k < g.members.size(); ++k) {
    if (row[g.members[k]] == 1.0) return k;
  }
  return g.members.size();
}

inline void switch_group(const OneHotGroup& g, std::span<double> row, Rng& rng) {
  std::size_t levels = g.members.size() + (g.has_reference ? 1 : 0);
  if (levels < 2) return;
  std::size_t current = active_member(g, row);
  std::size_t next = uniform_index(rng, levels - 1);
  if (next >= current) ++next;
  for (auto m : g.members) row[m] = 0.0;
  if (next < g.members.size()) row[g.members[next]] = 1.0;
}

}  // namespace detail

/// Draws n synthetic feature rows from `real` and labels them with `teacher`.
///
/// kernel_smoother: each row starts as a uniformly chosen real row;
/// continuous coordinates get N(0, bandwidth^2) noise (left unclipped).
/// independent_gaussian: each continuous column is drawn from a Gaussian
/// fitted to that column; each binary column and one-hot group is copied from
/// its own independently chosen real row. Under both strategies binary
/// columns are then flipped with flip_prob and each one-hot group moves to a
/// uniformly chosen different level with group_switch_prob.
inline Dataset draw_corpus(const Dataset& real, const LabelFn& teacher, std::size_t n, const SamplerSpec& spec,
                           Rng& rng) {
  if (n == 0) throw DomainError("draw_corpus: n must be positive");
  if (real.empty()) throw DomainError("draw_corpus: real dataset is empty");
  spec.validate();

  const FeatureSchema& schema = real.schema;
  const std::size_t d = schema.size();
  std::vector<double> col_mean(d, 0.0), col_sd(d, 0.0);
  if (spec.strategy == SamplerStrategy::independent_gaussian) {
    for (std::size_t j = 0; j < d; ++j) {
      if (schema[j].kind != ColumnKind::continuous) continue;
      auto col = real.column(j);
      if (col.size() >= 2) {
        auto mv = mean_var(col);
        col_mean[j] = mv.mean;
        col_sd[j] = std::sqrt(mv.var);
      } else {
        col_mean[j] = col.front();
      }
    }
  }

  Dataset out;
  out.schema = schema;
  out.rows = n;
  out.X.resize(n * d);
  out.y.resize(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution flip(spec.flip_prob);
  std::bernoulli_distribution regroup(spec.group_switch_prob);

  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    if (spec.strategy == SamplerStrategy::kernel_smoother) {
      auto src = real.row(uniform_index(rng, real.rows));
      std::copy(src.begin(), src.end(), row.begin());
      for (std::size_t j = 0; j < d; ++j) {
        if (schema[j].kind == ColumnKind::continuous && spec.bandwidth > 0.0) row[j] += spec.bandwidth * normal(rng);
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        const Column& c = schema[j];
        if (c.kind == ColumnKind::continuous) {
          row[j] = col_mean[j] + col_sd[j] * normal(rng);
        } else if (c.kind == ColumnKind::binary) {
          row[j] = real.at(uniform_index(rng, real.rows), j);
        }
      }
      for (const auto& g : schema.groups()) {
        auto src = real.row(uniform_index(rng, real.rows));
        for (auto m : g.members) row[m] = src[m];
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (schema[j].kind == ColumnKind::binary && flip(rng)) row[j] = 1.0 - row[j];
    }
    for (const auto& g : schema.groups()) {
      if (regroup(rng)) detail::switch_group(g, row, rng);
    }
  }

  // Discrete feature spaces repeat rows heavily; memoise teacher calls.
  if (schema.all_discrete()) {
    std::unordered_map<std::vector<double>, int, detail::RowHash> memo;
    std::vector<double> key(d);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = out.row(i);
      key.assign(row.begin(), row.end());
      auto it = memo.find(key);
      if (it == memo.end()) it = memo.emplace(key, teacher(row)).first;
      out.y[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.y[i] = teacher(out.row(i));
  }
  return out;
}

inline Dataset draw_corpus(const Dataset& real, const Forest& teacher, std::size_t n, const SamplerSpec& spec) {
  Rng rng = make_rng(spec.seed);
  return draw_corpus(real, teacher_labels(teacher), n, spec, rng);
}

/// Source of independent labelled corpora: draw(n, index) is reproducible for
/// a fixed (repetition seed, index) and independent across indices.
class CorpusSource {
 public:
  virtual ~CorpusSource() = default;
  virtual Dataset draw(std::size_t n, std::uint64_t index) const = 0;
};

class CorpusStream final : public CorpusSource {
 public:
  CorpusStream(std::shared_ptr<const Dataset> real, LabelFn teacher, SamplerSpec spec, std::uint64_t repetition_seed)
      : real_(std::move(real)), teacher_(std::move(teacher)), spec_(spec), repetition_seed_(repetition_seed) {
    spec_.validate();
  }

  Dataset draw(std::size_t n, std::uint64_t index) const override {
    Rng rng = make_rng(spec_.seed, {repetition_seed_, index});
    return draw_corpus(*real_, teacher_, n, spec_, rng);
  }

  const SamplerSpec& spec() const noexcept { return spec_; }

 private:
  std::shared_ptr<const Dataset> real_;
  LabelFn teacher_;
  SamplerSpec spec_;
  std::uint64_t repetition_seed_;
};

/// Factory of reproducible corpora for one repetition.
inline CorpusStream corpus_stream(std::shared_ptr<const Dataset> real, const Forest& teacher, const SamplerSpec& spec,
                                  std::uint64_t repetition_seed) {
  return CorpusStream(std::move(real), teacher_labels(teacher), spec, repetition_seed);
}

inline SamplerStrategy parse_sampler_strategy(const std::string& s) {
  if (s == "kernel" || s == "kernel-smoother") return SamplerStrategy::kernel_smoother;
  if (s == "independent" || s == "independent-gaussian") return SamplerStrategy::independent_gaussian;
  throw DomainError("unknown sampler strategy '" + s + "' (expected kernel|independent)");
}

inline std::string to_string(SamplerStrategy s) {
  return s == SamplerStrategy::kernel_smoother ? "kernel" : "independent";
}

}  // namespace distill
