// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "marksat/classifier.hpp"
#include "marksat/marking.hpp"

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

}  // namespace

TEST(Marking, SingleWideClause) {
  const Formula f = cnf(3, {{1, 2, 3}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Marking m = find_marking(f, {.k_m = 2, .k_u = 1, .seed = seed});
    ASSERT_TRUE(m.certified);
    EXPECT_EQ(m.size(), 2u);
    EXPECT_TRUE(verify_marking(f, m).empty());
  }
}

TEST(Marking, InfeasibleWidth) {
  const Formula f = cnf(2, {{1, 2}});
  EXPECT_THROW(find_marking(f, {.k_m = 2, .k_u = 1}), InvalidArgument);
}

TEST(Marking, EmptyFormulaIsCertified) {
  const Marking m = find_marking(Formula(10), {.k_m = 3, .k_u = 3, .seed = 4});
  EXPECT_TRUE(m.certified);
  EXPECT_EQ(m.resamples, 0u);
}

TEST(Marking, VerifyReportsViolations) {
  const Formula f = cnf(6, {{1, 2, 3}, {4, 5, 6}, {1, 5, 6}});
  EXPECT_EQ(verify_marking(f, Marking::from_vars(6, std::vector<Var>{}, 1, 1)),
            (std::vector<ClauseId>{0, 1, 2}));
  // Clause 1 has nothing marked; the others have x1.
  EXPECT_EQ(verify_marking(f, Marking::from_vars(6, std::vector<Var>{1}, 1, 1)),
            std::vector<ClauseId>{1});
}

TEST(Marking, Deterministic) {
  const Formula f = generate_random_kcnf(60, 120, 6, 8);
  const MarkingOptions opt{.k_m = 2, .k_u = 2, .seed = 17};
  const Marking a = find_marking(f, opt), b = find_marking(f, opt);
  EXPECT_EQ(a.vars, b.vars);
  EXPECT_EQ(a.resamples, b.resamples);
}

TEST(Marking, BudgetExhaustionIsUncertified) {
  // Two clauses over the same 2 variables with k_m = 2: needs both marked and
  // k_u = 0 leaves it feasible, but p = 0 can never mark anything.
  const Formula f = cnf(2, {{1, 2}});
  const Marking m = find_marking(f, {.k_m = 2, .k_u = 0, .p_mark = 0.0, .max_resamples = 25});
  EXPECT_FALSE(m.certified);
  EXPECT_EQ(m.resamples, 25u);
  EXPECT_FALSE(verify_marking(f, m).empty());
}

TEST(Marking, CandidatesRestrictMarks) {
  const Formula f = generate_random_kcnf(40, 30, 6, 3);
  std::vector<Var> evens;
  for (Var v = 2; v <= 40; v += 2) evens.push_back(v);
  const Marking m = find_marking(f, {.k_m = 0, .k_u = 1, .p_mark = 0.9, .seed = 1, .candidates = evens});
  for (Var v : m.vars) EXPECT_EQ(v % 2, 0u);
}

TEST(Marking, DefaultQuotas) {
  EXPECT_EQ(default_quotas(20, 0.0), (std::pair<std::size_t, std::size_t>{7, 4}));
  EXPECT_EQ(default_quotas(6, 0.25), (std::pair<std::size_t, std::size_t>{2, 1}));
}

// Bounded-degree instances well inside the resampling regime succeed
// essentially always.
TEST(Marking, SucceedsOnSparseInstances) {
  int certified = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Formula f = generate_random_kcnf(60, 20, 8, seed);
    const Marking m = find_marking(f, {.k_m = 2, .k_u = 2, .seed = seed});
    if (m.certified) {
      ++certified;
      EXPECT_TRUE(verify_marking(f, m).empty());
    }
  }
  EXPECT_GE(certified, 99);
}

TEST(Marking, GoodInducedMarkingHoldsOnGoodClauses) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Formula f = generate_random_kcnf(40, 60, 6, seed);
    const auto cl = classify(f, 12, 0.25, 6);
    const auto good = good_induced_formula(f, cl, true);
    const auto [k_m, k_u] = default_quotas(6, 0.25);
    const Marking m =
        find_marking(good.formula, {.k_m = k_m, .k_u = k_u, .seed = seed, .candidates = cl.v_good});
    if (!m.certified) continue;
    for (Var v : m.vars) EXPECT_TRUE(cl.is_good(v));
    EXPECT_TRUE(verify_marking(good.formula, m).empty());
  }
}
