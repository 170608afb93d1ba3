#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "distill/frl.hpp"
#include "oracles.hpp"

using namespace distill;

namespace {

Dataset mammographic_like() {
  Dataset d;
  d.schema.add_binary("IllDefinedMargin");
  d.schema.add_binary("IrregularShape");
  d.schema.add_binary("Age≥60");
  d.schema.add_binary("SpiculatedMargin");
  d.schema.add_binary("Always");
  std::mt19937_64 rng(1);
  std::bernoulli_distribution b(0.4);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> row{double(b(rng)), double(b(rng)), double(b(rng)), double(b(rng)), 1.0};
    d.push_row(row, row[0] || row[3]);
  }
  return d;
}

class FixedSource final : public CorpusSource {
 public:
  explicit FixedSource(Dataset d) : d_(std::move(d)) {}
  Dataset draw(std::size_t, std::uint64_t) const override { return d_; }

 private:
  Dataset d_;
};

}  // namespace

TEST(Mining, SupportThresholds) {
  Dataset d = mammographic_like();
  auto all = mine_antecedents(d, 1.0, 2);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all.antecedents[0].features, std::vector<std::size_t>{4});
  auto singles = mine_antecedents(d, 0.05, 1);
  EXPECT_EQ(singles.size(), 5u);
  for (const auto& a : singles.antecedents) EXPECT_EQ(a.features.size(), 1u);
  auto pairs = mine_antecedents(d, 0.05, 2);
  bool found = false;
  for (const auto& a : pairs.antecedents) {
    EXPECT_GE(a.support, 15u);
    EXPECT_LE(a.features.size(), 2u);
    found = found || a.features == std::vector<std::size_t>{0, 2};
  }
  EXPECT_TRUE(found);
}

TEST(Mining, Errors) {
  Dataset zeros = mammographic_like();
  std::fill(zeros.X.begin(), zeros.X.end(), 0.0);
  EXPECT_THROW(mine_antecedents(zeros, 0.1, 2), MiningError);
  Dataset cont;
  cont.schema.add_continuous("c");
  cont.push_row(std::vector<double>{0.3}, 1);
  EXPECT_THROW(mine_antecedents(cont, 0.1, 2), DomainError);
}

TEST(FrlKey, Format) {
  std::vector<std::string> names{"IllDefinedMargin", "IrregularShape", "Age≥60", "SpiculatedMargin"};
  RuleList list;
  list.clauses = {{{2, 0}, 0}, {{1}, 0}, {{3}, 0}};
  list.risks = {2, 1, 0, -1};
  EXPECT_EQ(frl_structure_key(list, names), "[IllDefinedMargin, Age≥60],[IrregularShape],[SpiculatedMargin]");
  RuleList other = list;
  other.risks = {5, 5, 5, 5};
  EXPECT_EQ(frl_structure_key(other, names), frl_structure_key(list, names));
  EXPECT_EQ(frl_structure_key(RuleList{{}, {0.0}}, names), "[]");
}

TEST(FrlRouting, FirstMatchWins) {
  RuleList list;
  list.clauses = {{{0}, 0}, {{1}, 0}};
  list.risks = {1.0, 0.0, -1.0};
  std::vector<double> both{1, 1}, second{0, 1}, none{0, 0};
  EXPECT_EQ(list.route(both), 0u);
  EXPECT_EQ(list.route(second), 1u);
  EXPECT_EQ(list.route(none), 2u);
  EXPECT_NEAR(list.predict_proba(none), 1 / (1 + std::exp(1.0)), 1e-15);
}

TEST(Pava, MatchesReference) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> uw(0.5, 10);
  for (int rep = 0; rep < 500; ++rep) {
    std::size_t n = 1 + rep % 7;
    std::vector<double> v(n), w(n);
    for (auto& x : v) x = nd(rng);
    for (auto& x : w) x = uw(rng);
    auto got = isotonic_nonincreasing(v, w);
    auto want = oracle::pava_reference(v, w);
    ASSERT_EQ(got.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    for (std::size_t i = 0; i + 1 < n; ++i) EXPECT_GE(got[i], got[i + 1]);
  }
}

TEST(FrlPosterior, MatchesDirectComputation) {
  Dataset d = mammographic_like();
  auto pool = mine_antecedents(d, 0.05, 2);
  FrlPosterior post(d, pool, 3);
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::size_t> list;
    std::size_t len = rep % 4;
    while (list.size() < len) {
      std::size_t a = rng() % pool.size();
      if (std::find(list.begin(), list.end(), a) == list.end()) list.push_back(a);
    }
    auto ev = post.evaluate(list);
    EXPECT_NEAR(ev.log_posterior, oracle::frl_log_posterior(d, pool, list), 1e-8);
    EXPECT_EQ(ev.risks.size(), len + 1);
  }
}

TEST(FrlChain, StationaryDistributionOnToySpace) {
  Dataset d = oracle::frl_toy_corpus(60, 5);
  auto pool = mine_antecedents(d, 0.05, 1);
  ASSERT_EQ(pool.size(), 2u);
  auto states = oracle::enumerate_lists(2, 2);
  ASSERT_EQ(states.size(), 5u);
  std::vector<double> target;
  double mx = -1e300;
  for (const auto& s : states) mx = std::max(mx, oracle::frl_log_posterior(d, pool, s));
  double z = 0;
  for (const auto& s : states) z += (target.emplace_back(std::exp(oracle::frl_log_posterior(d, pool, s) - mx)));
  for (auto& t : target) t /= z;

  FrlPosterior post(d, pool, 2);
  FrlChain chain(post, 11);
  const std::size_t batches = 100, per = 1000;
  std::vector<std::vector<double>> freq(states.size(), std::vector<double>(batches, 0));
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t s = 0; s < per; ++s) {
      chain.step();
      auto it = std::find(states.begin(), states.end(), chain.state());
      ASSERT_NE(it, states.end());
      freq[static_cast<std::size_t>(it - states.begin())][b] += 1.0 / per;
    }
  }
  for (std::size_t k = 0; k < states.size(); ++k) {
    auto mv = mean_var(freq[k]);
    double se = std::sqrt(mv.var / batches);
    EXPECT_LT(std::abs(mv.mean - target[k]), 3 * se + 1e-12) << "state " << k << " target " << target[k];
  }
}

TEST(FrlTrajectory, BasicContracts) {
  Dataset d = mammographic_like();
  auto pool = mine_antecedents(d, 0.05, 2);
  auto one = sample_frl_trajectory(d, pool, 3, 1, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LE(one[0].complexity, 1);
  auto many = sample_frl_trajectory(d, pool, 3, 2000, 2);
  EXPECT_EQ(many.size(), 2000u);
  for (const auto& c : many) {
    EXPECT_LE(c.complexity, 3);
    const auto& list = static_cast<const FrlStudent&>(*c.model).list();
    EXPECT_TRUE(list.risks_monotone());
  }
  EXPECT_THROW(sample_frl_trajectory(d, pool, 3, 0, 1), DomainError);
}

TEST(FrlCandidates, UnionOfTrajectories) {
  FixedSource src(mammographic_like());
  auto one = frl_candidates(src, 300, 1, 50, 3);
  EXPECT_EQ(one.size(), 50u);
  auto c = frl_candidates(src, 300, 3, 50, 3);
  EXPECT_EQ(c.size(), 150u);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i].order, i);
  EXPECT_THROW(frl_candidates(src, 300, 0, 50, 3), DomainError);
}
