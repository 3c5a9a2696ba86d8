// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <map>

#include "marksat/coupling.hpp"
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

Classification no_bad(const Formula& f) { return classify(f, 1000, 0.25, std::max<std::size_t>(f.max_width(), 1)); }

Marking marked(std::size_t n, std::vector<Var> vars, std::size_t k_u = 1) {
  return Marking::from_vars(n, vars, 1, k_u, true);
}

double eigen_max_real(const InfluenceMatrix& psi) {
  const auto d = static_cast<Eigen::Index>(psi.size());
  if (d == 0) return 0.0;
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      a(i, j) = psi(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  double best = -1e300;
  for (Eigen::Index i = 0; i < d; ++i) best = std::max(best, es.eigenvalues()[i].real());
  return best;
}

}  // namespace

TEST(Coupling, DefaultCutoff) {
  EXPECT_EQ(default_kc(9, 0.0), 4u);
  EXPECT_EQ(default_kc(5, 0.05), 4u);  // 4 / 6.6 * 5 = 3.03
  EXPECT_EQ(default_kc(3, 0.4), 1u);   // non-positive denominator
  EXPECT_EQ(default_kc(0, 0.0), 1u);
}

TEST(Coupling, IsolatedStartVariable) {
  const Formula f = cnf(3, {{2, 3}});
  const Marking m = marked(3, {1, 2});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = run_coupling(f, no_bad(f), m, PartialAssignment(3), 1, 1, seed);
    EXPECT_EQ(t.v_failed, std::vector<Var>{1});
    EXPECT_TRUE(t.e_failed.empty() && t.e_failed_dagger.empty() && t.e_failed_ddagger.empty());
    EXPECT_FALSE(t.x[1]);
    EXPECT_TRUE(t.y[1]);
    EXPECT_EQ(t.x[2], t.y[2]);
    EXPECT_EQ(t.x[3], t.y[3]);
    EXPECT_TRUE(t.diagnostics.ok());
  }
}

TEST(Coupling, SingleClauseDisagreesHalfTheTime) {
  // mu(x2 = 1 | x1 = 0) = 1 and mu(x2 = 1 | x1 = 1) = 1/2.
  const Formula f = cnf(2, {{1, 2}});
  const Marking m = marked(2, {1, 2}, 0);
  const auto cl = no_bad(f);
  std::size_t differ = 0;
  const std::size_t runs = 20000;
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    const auto t = run_coupling(f, cl, m, PartialAssignment(2), 1, 1, seed, {}, {.record_r = true});
    ASSERT_EQ(t.r.size(), 1u);
    EXPECT_EQ(t.r[0].first, 2u);
    EXPECT_TRUE(t.x[2]);
    EXPECT_EQ(t.y[2], t.r[0].second < 0.5);
    differ += t.x[2] != t.y[2];
  }
  EXPECT_NEAR(static_cast<double>(differ) / runs, 0.5, 4.0 * std::sqrt(0.25 / runs));

  const auto est = coupling_influence_bound(f, cl, m, PartialAssignment(2), 1, 1, 20000, 3);
  ASSERT_EQ(est.vars, std::vector<Var>{2});
  EXPECT_NEAR(est.rates[0].mean, 0.5, 4.0 * est.rates[0].sigma);
}

TEST(Coupling, RejectsBadInput) {
  const Formula f = cnf(3, {{1, 2}, {-1, 3}});
  const auto cl = no_bad(f);
  const Marking m = marked(3, {1, 2});
  PartialAssignment pin(3);
  pin.assign(1, true);
  EXPECT_THROW(run_coupling(f, cl, m, pin, 1, 1, 0), InvalidArgument);
  EXPECT_THROW(run_coupling(f, cl, m, PartialAssignment(3), 3, 1, 0), InvalidArgument);
  EXPECT_THROW(run_coupling(f, cl, m, PartialAssignment(3), 1, 0, 0), InvalidArgument);
  // x1 is forced to 1 by the unit clause, so v0 = x1 = 0 is infeasible.
  const Formula g = cnf(2, {{1}, {1, 2}});
  EXPECT_THROW(run_coupling(g, no_bad(g), marked(2, {1}), PartialAssignment(2), 1, 1, 0), InfeasiblePinning);
}

// X and Y must follow the two conditional laws exactly.
TEST(Coupling, MarginalLawsMatchEnumeration) {
  Rng pick(5);
  int tested = 0;
  for (std::uint64_t seed = 0; tested < 3; ++seed) {
    const Formula f = generate_random_kcnf(8, 8, 3, 70 + seed);
    const Marking m = find_marking(f, {.k_m = 1, .k_u = 1, .seed = seed});
    if (!m.certified || m.size() < 2) continue;
    const Var v0 = m.vars[0];
    PartialAssignment pin(8);
    if (tested == 1) pin.assign(m.vars[1], pick.bit());
    PartialAssignment x0 = pin, x1 = pin;
    x0.assign(v0, false);
    x1.assign(v0, true);
    const auto s0 = oracle::solutions(f, x0), s1 = oracle::solutions(f, x1);
    if (s0.empty() || s1.empty()) continue;
    const auto cl = no_bad(f);
    std::map<std::string, std::uint64_t> hx, hy;
    const std::size_t runs = 40000;
    for (std::uint64_t r = 0; r < runs; ++r) {
      const auto t = run_coupling(f, cl, m, pin, v0, 1, mix_seed(seed, r));
      ++hx[t.x.to_string()];
      ++hy[t.y.to_string()];
    }
    EXPECT_LE(oracle::tv_to_uniform(hx, s0), 0.03) << seed;
    EXPECT_LE(oracle::tv_to_uniform(hy, s1), 0.03) << seed;
    ++tested;
  }
}

TEST(Coupling, StructuralInvariantsWithBadVariables) {
  int with_bad = 0;
  for (std::uint64_t seed = 0; seed < 80 && with_bad < 25; ++seed) {
    const Formula f = generate_random_kcnf(24, 12, 4, 500 + seed);
    const auto cl = classify(f, 3, 0.4, 4);
    if (cl.v_bad.empty() || cl.v_good.size() < 4) continue;
    const auto good = good_induced_formula(f, cl, true);
    const Marking m = find_marking(good.formula, {.k_m = 1, .k_u = 1, .seed = seed, .candidates = cl.v_good});
    if (!m.certified || m.vars.empty()) continue;
    for (std::uint64_t r = 0; r < 20; ++r) {
      CouplingTrace t;
      try {
        t = run_coupling(f, cl, m, PartialAssignment(24), m.vars[r % m.size()], 2, r);
      } catch (const InfeasiblePinning&) {
        continue;
      }
      EXPECT_TRUE(t.diagnostics.exit_condition);
      EXPECT_TRUE(t.diagnostics.structure_violations.empty()) << seed;
      EXPECT_TRUE(t.diagnostics.unexplained_failed.empty()) << seed;
      EXPECT_TRUE(is_satisfying(f, t.x));
      EXPECT_TRUE(is_satisfying(f, t.y));
      // Every disagreement is inside the failed set.
      for (Var v = 1; v <= 24; ++v) {
        if (t.x[v] != t.y[v]) {
          EXPECT_TRUE(std::binary_search(t.v_failed.begin(), t.v_failed.end(), v));
        }
      }
      // Failed bad variables bring their whole component.
      for (const auto& comp : cl.bad_components) {
        const auto in_failed = [&](Var v) { return std::binary_search(t.v_failed.begin(), t.v_failed.end(), v); };
        if (std::any_of(comp.begin(), comp.end(), in_failed)) {
          EXPECT_TRUE(std::all_of(comp.begin(), comp.end(), in_failed));
        }
      }
    }
    ++with_bad;
  }
  EXPECT_GE(with_bad, 10);
}

TEST(Coupling, ThresholdWindowHolds) {
  // Width 9, every variable in exactly two clauses, one marked variable per
  // clause: 2^(8 - 1) = 128 >= 2e * 2 * 9.
  Rng signs(4);
  std::vector<Clause> cs(4);
  for (Var v = 1; v <= 18; ++v) {
    cs[v <= 9 ? 0 : 1].push_back({v, signs.bit()});
    cs[v % 2 == 1 ? 2 : 3].push_back({v, signs.bit()});
  }
  const Formula f(18, cs);
  const Marking m = Marking::from_vars(18, std::vector<Var>{1, 18}, 1, 8, true);
  ASSERT_TRUE(verify_marking(f, m).empty());
  const auto cl = no_bad(f);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto t = run_coupling(f, cl, m, PartialAssignment(18), 1, 1, seed, {}, {.s = 9.0});
    EXPECT_TRUE(t.diagnostics.threshold_checked);
    EXPECT_TRUE(t.diagnostics.threshold_violations.empty()) << seed;
  }
}

TEST(Influence, Examples) {
  const Formula f = cnf(2, {{1, 2}});
  const auto psi = exact_influence_matrix(f, marked(2, {1, 2}), PartialAssignment(2));
  EXPECT_EQ(psi.at(1, 2), 0.5);
  EXPECT_EQ(psi.at(2, 1), 0.5);
  EXPECT_EQ(psi.at(1, 1), 0.0);
  EXPECT_NEAR(psi.max_eigenvalue, 0.5, 1e-9);

  const Formula indep = cnf(4, {{1, 3}, {2, 4}});
  const auto zero = exact_influence_matrix(indep, marked(4, {1, 2}), PartialAssignment(4));
  EXPECT_EQ(zero.at(1, 2), 0.0);
  EXPECT_NEAR(zero.max_eigenvalue, 0.0, 1e-12);

  // Pinning x1 = 1 satisfies every clause.
  const Formula g = cnf(3, {{1, 2}, {1, 3}});
  PartialAssignment pin(3);
  pin.assign(1, true);
  const auto pinned = exact_influence_matrix(g, marked(3, {1, 2, 3}), pin);
  EXPECT_EQ(pinned.vars, (std::vector<Var>{2, 3}));
  for (double e : pinned.entries) EXPECT_EQ(e, 0.0);
}

TEST(Influence, InfeasibleRowsAreFlagged) {
  const Formula f = cnf(3, {{1}, {1, 2}, {2, 3}});
  const auto psi = exact_influence_matrix(f, marked(3, {1, 2, 3}), PartialAssignment(3));
  EXPECT_EQ(psi.infeasible, std::vector<Var>{1});
  EXPECT_EQ(psi.row_sum(1), 0.0);
  EXPECT_NE(psi.at(2, 3), 0.0);
}

TEST(Influence, EigenvalueMatchesDenseSolver) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const Formula f = generate_random_kcnf(10, 14, 3, 40 + seed);
    const Marking m = marked(10, {1, 2, 3, 4, 5, 6});
    const auto psi = exact_influence_matrix(f, m, PartialAssignment(10));
    for (double e : psi.entries) {
      EXPECT_GE(e, -1.0);
      EXPECT_LE(e, 1.0);
    }
    if (!psi.infeasible.empty()) continue;
    EXPECT_NEAR(psi.max_eigenvalue, eigen_max_real(psi), 1e-6) << seed;
  }
}

// Influence is dominated by the expected number of coupling disagreements.
TEST(Influence, DominatedByCoupling) {
  int tested = 0;
  for (std::uint64_t seed = 0; tested < 4 && seed < 40; ++seed) {
    const Formula f = generate_random_kcnf(9, 9, 3, 300 + seed);
    const Marking m = find_marking(f, {.k_m = 1, .k_u = 1, .seed = seed});
    if (!m.certified || m.size() < 2) continue;
    const auto psi = exact_influence_matrix(f, m, PartialAssignment(9));
    if (!psi.infeasible.empty()) continue;
    const auto cl = no_bad(f);
    for (Var u : m.vars) {
      const auto est = coupling_influence_bound(f, cl, m, PartialAssignment(9), u, 1, 4000, seed);
      EXPECT_LE(psi.row_sum(u), est.total.mean + 3.0 * est.total.sigma + 1e-12) << seed << " " << u;
      EXPECT_EQ(est.diagnostic_failures, 0u);
    }
    ++tested;
  }
  EXPECT_EQ(tested, 4);
}
