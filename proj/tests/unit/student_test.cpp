#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "distill/stability.hpp"
#include "distill/student.hpp"
#include "oracles.hpp"

using namespace distill;
using oracle::ConstantStudent;

namespace {
Candidate cand(double p, const std::string& key, std::size_t order) {
  return make_candidate(std::make_shared<ConstantStudent>(p, key), Family::synthetic, order);
}
Dataset labels(std::vector<int> y) {
  Dataset d;
  d.schema.add_continuous("x");
  for (int v : y) d.push_row(std::vector<double>{0.0}, v);
  return d;
}
}  // namespace

TEST(Partition, GroupsByKey) {
  std::vector<Candidate> c{cand(0.5, "A", 0), cand(0.5, "B", 1), cand(0.5, "A", 2), cand(0.5, "C", 3)};
  auto classes = partition(c);
  ASSERT_EQ(classes.size(), 3u);
  EXPECT_EQ(classes[0].key, "A");
  EXPECT_EQ(classes[0].members.size(), 2u);
  EXPECT_EQ(classes[2].key, "C");
  std::size_t total = 0;
  for (const auto& cl : classes) {
    total += cl.members.size();
    for (const auto& m : cl.members) EXPECT_EQ(m.key, cl.key);
  }
  EXPECT_EQ(total, c.size());
  std::vector<Candidate> same{cand(0.5, "A", 0), cand(0.4, "A", 1)};
  EXPECT_EQ(partition(same).size(), 1u);
}

TEST(Representatives, LossMinimalMember) {
  Dataset d = labels({1, 1, 1, 0});
  std::vector<Candidate> c{cand(0.5, "A", 0), cand(0.75, "A", 1), cand(0.9, "B", 2)};
  auto classes = select_representatives(partition(c), d, cross_entropy_loss);
  EXPECT_EQ(classes[0].rep().order, 1u);
  EXPECT_EQ(classes[1].rep().order, 2u);
  EXPECT_NEAR(classes[0].representative_loss, -(3 * std::log(0.75) + std::log(0.25)) / 4, 1e-12);
}

TEST(Representatives, TieGoesToEarliest) {
  Dataset d = labels({1, 0});
  std::vector<Candidate> c{cand(0.5, "A", 5), cand(0.5, "A", 2), cand(0.5, "A", 9)};
  auto classes = select_representatives(partition(c), d, cross_entropy_loss);
  EXPECT_EQ(classes[0].rep().order, 2u);
  std::reverse(c.begin(), c.end());
  classes = select_representatives(partition(c), d, cross_entropy_loss);
  EXPECT_EQ(classes[0].rep().order, 2u);
}

TEST(Representatives, Errors) {
  Dataset empty = labels({});
  std::vector<Candidate> c{cand(0.5, "A", 0)};
  EXPECT_THROW(select_representatives(partition(c), empty, cross_entropy_loss), EvaluationError);
  std::vector<Candidate> nan{cand(std::numeric_limits<double>::quiet_NaN(), "Z", 0)};
  try {
    select_representatives(partition(nan), labels({1}), cross_entropy_loss);
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("'Z'"), std::string::npos);
  }
}

TEST(Candidate, PredictionsAreClamped) {
  auto c = cand(1.0, "A", 0);
  std::vector<double> x{0};
  EXPECT_DOUBLE_EQ(c.predict(x), 1 - kProbEpsilon);
  EXPECT_DOUBLE_EQ(cand(0.0, "A", 0).predict(x), kProbEpsilon);
}
