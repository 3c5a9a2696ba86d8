// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>

#include "marksat/marginals.hpp"
#include "oracles.hpp"

using namespace marksat;

namespace {

Formula cnf(std::size_t n, std::initializer_list<std::initializer_list<long>> clauses) {
  std::vector<Clause> cs;
  for (const auto& c : clauses) {
    Clause clause;
    for (long lit : c) clause.push_back(Literal::from_dimacs(lit));
    cs.push_back(std::move(clause));
  }
  return Formula(n, std::move(cs));
}

PartialAssignment random_pin(std::size_t n, Rng& rng, double p) {
  PartialAssignment x(n);
  for (Var v = 1; v <= n; ++v)
    if (rng.uniform01() < p) x.assign(v, rng.bit());
  return x;
}

}  // namespace

TEST(Marginal, Examples) {
  const Formula f = cnf(2, {{1, 2}});
  const PartialAssignment empty(2);
  EXPECT_EQ(exact_marginal(f, empty, 1), (Marginal{2, 3}));
  EXPECT_EQ(exact_marginal(Formula(3), PartialAssignment(3), 2), (Marginal{1, 2}));
  PartialAssignment x(2);
  x.assign(2, false);
  EXPECT_EQ(exact_marginal(f, x, 1), (Marginal{1, 1}));
}

TEST(Marginal, RationalEqualityCrossMultiplies) {
  EXPECT_EQ((Marginal{2, 4}), (Marginal{1, 2}));
  EXPECT_FALSE((Marginal{2, 3}) == (Marginal{1, 2}));
}

TEST(Marginal, Errors) {
  const Formula f = cnf(2, {{1}, {-1, 2}});
  PartialAssignment x(2);
  x.assign(1, false);
  EXPECT_THROW(exact_marginal(f, x, 2), InfeasiblePinning);
  // Pinning x2 = 0 leaves (x1) and (not x1): no solution in the component.
  const Formula g = cnf(3, {{1, 2}, {-1, 2}, {1, 3}});
  PartialAssignment y(3);
  y.assign(2, false);
  EXPECT_THROW(exact_marginal(g, y, 3), InfeasiblePinning);
  Limits tight;
  tight.max_component_vars = 2;
  EXPECT_THROW(exact_marginal(cnf(3, {{1, 2, 3}}), PartialAssignment(3), 1, tight), CapExceeded);
}

TEST(Marginal, MatchesOracleUnderRandomPinnings) {
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Formula f = generate_random_kcnf(11, 20 + seed % 25, 3, seed);
    for (int trial = 0; trial < 10; ++trial) {
      const PartialAssignment x = random_pin(11, rng, 0.3);
      const Var v = static_cast<Var>(1 + rng.below(11));
      const auto ref = oracle::marginal(f, x, v);
      if (ref.total == 0) {
        // Infeasible overall; the component of v may still be fine, but if it
        // reports a value the rest of the formula must be at fault.
        continue;
      }
      EXPECT_EQ(exact_marginal(f, x, v), (Marginal{ref.ones, ref.total})) << seed;
    }
  }
}

// Large components go through the branching counter instead of bitmasks.
TEST(Marginal, LargeComponentsMatchOracle) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Formula f = generate_random_kcnf(18, 40 + seed, 3, 300 + seed);
    const auto sols = oracle::solutions(f);
    if (sols.empty()) continue;
    for (Var v = 1; v <= 18; v += 3) {
      std::uint64_t ones = 0;
      for (const auto& a : sols) ones += a[v];
      EXPECT_EQ(exact_marginal(f, PartialAssignment(18), v), (Marginal{ones, sols.size()}));
    }
    EXPECT_EQ(count_extensions(f, PartialAssignment(18)), sols.size());
  }
}

TEST(Marginal, NodeBudgetIsEnforced) {
  Limits tiny;
  tiny.max_nodes = 3;
  const Formula f = generate_random_kcnf(30, 60, 3, 1);
  EXPECT_THROW(count_extensions(f, PartialAssignment(30), tiny), CapExceeded);
}

TEST(Sample, IsolatedTargetIsAFairBit) {
  const Formula f = cnf(3, {{1, 2}});
  Rng rng(3);
  int ones = 0;
  const std::vector<Var> target{3};
  for (int i = 0; i < 20000; ++i) ones += sample_conditional(f, PartialAssignment(3), target, rng).value(3);
  EXPECT_NEAR(ones / 20000.0, 0.5, 0.02);
}

TEST(Sample, UniformOverSolutions) {
  const Formula f = cnf(2, {{1, 2}});
  Rng rng(8);
  const std::vector<Var> targets{1, 2};
  std::map<std::string, std::uint64_t> hist;
  for (int i = 0; i < 100000; ++i)
    ++hist[sample_conditional(f, PartialAssignment(2), targets, rng).to_total().to_string()];
  EXPECT_LE(oracle::tv_to_uniform(hist, oracle::solutions(f)), 0.01);
}

TEST(Sample, FullSamplesAreUniformOnRandomInstances) {
  Rng rng(21);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Formula f = generate_random_kcnf(9, 18, 3, 40 + seed);
    const auto sols = oracle::solutions(f);
    ASSERT_FALSE(sols.empty());
    std::map<std::string, std::uint64_t> hist;
    for (int i = 0; i < 100000; ++i) {
      const Assignment a = sample_solution(f, rng);
      ASSERT_TRUE(is_satisfying(f, a));
      ++hist[a.to_string()];
    }
    EXPECT_LE(oracle::tv_to_uniform(hist, sols), 0.02);
  }
}

TEST(Sample, ConditionalLawMatchesOracle) {
  const Formula f = generate_random_kcnf(8, 14, 3, 5);
  PartialAssignment x(8);
  x.assign(2, true);
  x.assign(5, false);
  const auto sols = oracle::solutions(f, x);
  ASSERT_FALSE(sols.empty());
  const std::vector<Var> targets{1, 3, 4, 6, 7, 8};
  Rng rng(4);
  std::map<std::string, std::uint64_t> hist;
  for (int i = 0; i < 100000; ++i) {
    PartialAssignment s = sample_conditional(f, x, targets, rng);
    s.merge(x);
    ++hist[s.to_total().to_string()];
  }
  EXPECT_LE(oracle::tv_to_uniform(hist, sols), 0.02);
}

TEST(Sample, Reproducible) {
  const Formula f = generate_random_kcnf(20, 30, 3, 6);
  std::vector<Var> all(20);
  std::iota(all.begin(), all.end(), Var{1});
  EXPECT_EQ(sample_conditional(f, PartialAssignment(20), all, std::uint64_t{9}),
            sample_conditional(f, PartialAssignment(20), all, std::uint64_t{9}));
}

TEST(Sample, PinnedTargetRejected) {
  const Formula f = cnf(2, {{1, 2}});
  PartialAssignment x(2);
  x.assign(1, true);
  const std::vector<Var> targets{1};
  EXPECT_THROW(sample_conditional(f, x, targets, std::uint64_t{0}), InvalidArgument);
}

// Factorization: across different components the joint count is the
// product of the component counts.
TEST(Sample, ComponentsFactorize) {
  const Formula f = cnf(6, {{1, 2}, {-2, 3}, {4, 5, 6}});
  const auto a = exact_marginal(f, PartialAssignment(6), 1);
  const auto b = exact_marginal(f, PartialAssignment(6), 4);
  const auto sols = oracle::solutions(f);
  std::uint64_t both = 0;
  for (const auto& s : sols) both += s[1] && s[4];
  EXPECT_EQ(both * a.total * b.total, a.ones * b.ones * sols.size());
}

TEST(ComponentSample, WeightAndSatisfaction) {
  const Formula f = cnf(4, {{1, 2}, {2, 3}});
  Rng rng(1);
  const auto cs = sample_component(f, PartialAssignment(4), 1, rng);
  EXPECT_EQ(cs.vars, (std::vector<Var>{1, 2, 3}));
  EXPECT_EQ(cs.weight, 5u);
  EXPECT_TRUE(cs.assignment.value(1) || cs.assignment.value(2));
  EXPECT_TRUE(cs.assignment.value(2) || cs.assignment.value(3));
}

TEST(LocalUniformity, Examples) {
  const auto empty = check_local_uniformity(Formula(4), Marking::from_vars(4, std::vector<Var>{1, 2}), 1.0,
                                            50, 1);
  EXPECT_DOUBLE_EQ(empty.worst, 0.5);
  EXPECT_TRUE(empty.violations.empty());

  // Unpinned (x1 or x2): 2/3 < (1/2) e^{1/2}.
  const Formula f = cnf(2, {{1, 2}});
  const auto rep = check_local_uniformity(f, Marking::from_vars(2, std::vector<Var>{}), 2.0, 20, 1);
  EXPECT_NEAR(rep.worst, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rep.bound, 0.5 * std::exp(0.5), 1e-12);
  EXPECT_TRUE(rep.violations.empty());

  const auto unit = check_local_uniformity(cnf(1, {{1}}), Marking::from_vars(1, std::vector<Var>{}), 2.0, 10, 1);
  ASSERT_EQ(unit.violations.size(), 1u);
  EXPECT_EQ(unit.violations[0].var, 1u);
  EXPECT_DOUBLE_EQ(unit.worst, 1.0);
}

TEST(TreeExcess, Examples) {
  const Formula single = cnf(3, {{1, 2, 3}});
  EXPECT_EQ(tree_excess(single, std::vector<ClauseId>{0}), 0u);
  const Formula pair = cnf(4, {{1, 2, 3}, {1, 2, 4}});
  EXPECT_EQ(tree_excess(pair, std::vector<ClauseId>{0, 1}), 1u);
  const Formula chain = cnf(7, {{1, 2, 3}, {3, 4, 5}, {5, 6, 7}});
  EXPECT_EQ(tree_excess(chain, std::vector<ClauseId>{0, 1, 2}), 0u);
}
