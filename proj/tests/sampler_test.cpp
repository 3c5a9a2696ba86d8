// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>

#include "marksat/sampler.hpp"
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

Marking marked(std::size_t n, std::vector<Var> vars) { return Marking::from_vars(n, vars, 1, 1, true); }

}  // namespace

TEST(Sampler, DefaultTMax) {
  EXPECT_EQ(default_t_max(0.5, 1), 1u);
  EXPECT_EQ(default_t_max(1.0, 100), static_cast<std::size_t>(std::ceil(std::log(100.0) * 50.0)));
}

TEST(Sampler, BlockSizeIsCeiling) {
  const Formula f = generate_random_kcnf(10, 5, 3, 1);
  const Marking m = marked(10, {1, 2, 3, 4, 5, 6, 7});
  EXPECT_EQ(BlockDynamics(f, m, {.theta = 0.3}).block_size(), 3u);
  EXPECT_EQ(BlockDynamics(f, m, {.theta = 1.0}).block_size(), 7u);
  EXPECT_EQ(BlockDynamics(f, m, {.theta = 0.01}).block_size(), 1u);
  EXPECT_THROW(BlockDynamics(f, m, {.theta = 0.0}), InvalidArgument);
}

TEST(Sampler, EmptyFormulaIsUniform) {
  const Formula f(3);
  const Marking m = marked(3, {1});
  const auto est = estimate_tv(f, m, {.theta = 1.0, .t_max = 2, .seed = 5}, 40000);
  EXPECT_EQ(est.support, 8u);
  EXPECT_LE(est.tv, 0.02);
}

TEST(Sampler, UniqueSolutionAlwaysReturned) {
  const Formula f = cnf(3, {{1}, {-2}, {3}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto res = run_block_dynamics(f, marked(3, {1, 2}), {.theta = 0.5, .t_max = 3, .seed = seed});
    EXPECT_EQ(res.assignment.to_string(), "101");
  }
  EXPECT_EQ(estimate_tv(f, marked(3, {2}), {.theta = 1.0, .t_max = 1}, 100).tv, 0.0);
}

TEST(Sampler, FullBlockIsExact) {
  const Formula f = generate_random_kcnf(8, 8, 4, 12);
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 1, .seed = 3});
  ASSERT_TRUE(m.certified);
  const auto est = estimate_tv(f, m, {.theta = 1.0, .t_max = 1, .seed = 9}, 100000);
  EXPECT_EQ(est.outside_support, 0u);
  EXPECT_LE(est.tv, 0.02);
}

// The table-free path must realize the same law.
TEST(Sampler, ComponentPathMatchesTablePath) {
  const Formula f = generate_random_kcnf(7, 7, 3, 4);
  const Marking m = find_marking(f, {.k_m = 1, .k_u = 1, .seed = 2});
  ASSERT_TRUE(m.certified);
  SamplerConfig cfg{.theta = 0.4, .t_max = 6, .seed = 1, .marked_table_limit = 0};
  ASSERT_FALSE(BlockDynamics(f, m, cfg).uses_table());
  const auto est = estimate_tv(f, m, cfg, 60000);
  EXPECT_LE(est.tv, 0.025);
}

TEST(Sampler, ZeroStepsShowsBias) {
  // mu(x1 = 1) = 2/3 but X_0(x1) is a fair bit: TV to uniform is exactly 1/6.
  const Formula f = cnf(2, {{1, 2}});
  const auto est = estimate_tv(f, marked(2, {1}), {.theta = 1.0, .t_max = 0, .seed = 3}, 100000);
  EXPECT_NEAR(est.tv, 1.0 / 6.0, 0.01);
}

TEST(Sampler, PartialBlocksConverge) {
  const Formula f = generate_random_kcnf(8, 8, 4, 31);
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 1, .seed = 7});
  ASSERT_TRUE(m.certified);
  const auto est = estimate_tv(f, m, {.theta = 0.3, .t_max = 60, .seed = 2}, 60000);
  EXPECT_LE(est.tv, 0.05);
}

TEST(Sampler, Reproducible) {
  const Formula f = generate_random_kcnf(30, 20, 4, 3);
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 1, .seed = 1});
  const SamplerConfig cfg{.theta = 0.3, .t_max = 20, .seed = 77};
  const auto a = run_block_dynamics(f, m, cfg);
  const auto b = run_block_dynamics(f, m, cfg);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_TRUE(is_satisfying(f, a.assignment));
  EXPECT_EQ(a.trace.steps, 20u);
}

TEST(Sampler, LargeMarkingUsesComponentDraws) {
  const Formula f = generate_random_kcnf(40, 30, 5, 8);
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 2, .seed = 4});
  ASSERT_TRUE(m.certified);
  ASSERT_GT(m.size(), 16u);
  SamplerConfig cfg{.theta = 0.2, .t_max = 50, .seed = 6, .record_steps = true};
  BlockDynamics chain(f, m, cfg);
  EXPECT_FALSE(chain.uses_table());
  Rng rng(6);
  const auto res = chain.run(rng);
  EXPECT_TRUE(is_satisfying(f, res.assignment));
  EXPECT_EQ(res.trace.step_max_component.size(), 50u);
  EXPECT_GE(res.trace.max_component, 1u);
}

// One block step from an exact mu_M sample leaves mu_M invariant.
TEST(Sampler, OneStepPreservesMarkedLaw) {
  const Formula f = generate_random_kcnf(7, 9, 3, 17);
  const Marking m = find_marking(f, {.k_m = 1, .k_u = 1, .seed = 5});
  ASSERT_TRUE(m.certified);
  const auto sols = oracle::solutions(f);
  ASSERT_FALSE(sols.empty());
  std::map<std::string, double> mu;
  for (const auto& a : sols) mu[PartialAssignment::restrict(a, m.vars).to_string()] += 1.0 / sols.size();

  const std::size_t runs = 100000;
  std::map<std::string, double> hist;
  Rng rng(3);
  for (std::size_t r = 0; r < runs; ++r) {
    const PartialAssignment start = sample_conditional(f, PartialAssignment(7), m.vars, rng);
    SamplerConfig cfg{.theta = 0.5, .t_max = 1, .seed = 0, .init = start};
    BlockDynamics chain(f, m, cfg);
    hist[chain.run_marked(rng).to_string()] += 1.0;
  }
  double chi2 = 0.0;
  for (const auto& [cell, p] : mu) {
    const double expect = p * runs;
    const double seen = hist.count(cell) ? hist[cell] : 0.0;
    chi2 += (seen - expect) * (seen - expect) / expect;
  }
  for (const auto& [cell, c] : hist) ASSERT_TRUE(mu.count(cell)) << cell;
  const double df = static_cast<double>(mu.size() - 1);
  EXPECT_LT(chi2, df + 5.0 * std::sqrt(2.0 * df) + 10.0);
}

TEST(Sampler, InfeasibleInitIsRejected) {
  const Formula f = cnf(2, {{1, 2}});
  PartialAssignment init(2);
  init.assign(1, false);
  init.assign(2, false);
  EXPECT_THROW(run_block_dynamics(f, marked(2, {1, 2}), {.theta = 0.5, .t_max = 1, .init = init}),
               InfeasiblePinning);
}

TEST(ChainUniformity, StartIsUniformProduct) {
  const Formula f(6);
  const Marking m = marked(6, {1, 2, 3, 4});
  const auto rep = check_chain_uniformity(f, m, {.theta = 0.5, .t_max = 0, .seed = 1}, 20000, 6.0, 5);
  EXPECT_EQ(rep.violations, 0u);
  for (const auto& cell : rep.cells) {
    const double expect = cell.vars.size() == 1 ? 0.5 : 0.25;
    EXPECT_NEAR(cell.estimate, expect, 0.02);
  }
}

TEST(ChainUniformity, HoldsOnSparseWideInstance) {
  const Formula f = generate_random_kcnf(24, 6, 6, 2);
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 3, .seed = 9});
  ASSERT_TRUE(m.certified);
  const auto rep = check_chain_uniformity(f, m, {.theta = 0.3, .t_max = 30, .seed = 4}, 4000, 6.0, 10);
  EXPECT_EQ(rep.violations, 0u);
}
