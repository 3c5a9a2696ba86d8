// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "marksat/formula.hpp"

namespace marksat {

/// Partition of variables and clauses into bad and good parts, produced by the
/// high-degree contamination process.
struct Classification {
  std::size_t delta = 0;
  double zeta = 0.0;
  std::size_t k = 0;
  /// Integer form of the zeta*k threshold: a clause is bad once at least this
  /// many of its variables are bad.
  std::size_t threshold = 0;

  std::vector<char> bad_var;     // indexed by Var, size n + 1
  std::vector<char> bad_clause;  // indexed by ClauseId
  std::vector<Var> v_bad, v_good;
  std::vector<ClauseId> c_bad, c_good;
  /// Connected components of the bad-variable graph (variables adjacent when
  /// they share a bad clause); isolated bad variables are singletons.
  std::vector<std::vector<Var>> bad_components;
  /// Number of iterations until the variable set stabilized.
  std::size_t iterations = 0;

  bool is_bad(Var v) const { return bad_var[v] != 0; }
  bool is_good(Var v) const { return bad_var[v] == 0; }
  bool is_bad_clause(ClauseId c) const { return bad_clause[c] != 0; }

  std::size_t max_component() const {
    std::size_t best = 0;
    for (const auto& comp : bad_components) best = std::max(best, comp.size());
    return best;
  }
};

/// ceil(zeta * k), robust to floating error in the product.
inline std::size_t zeta_threshold(double zeta, std::size_t k) {
  return static_cast<std::size_t>(std::ceil(zeta * static_cast<double>(k) - 1e-9));
}

/// Delta = ceil(k^4 * alpha).
inline std::size_t default_delta(std::size_t k, double alpha) {
  const double kd = static_cast<double>(k);
  return static_cast<std::size_t>(std::ceil(kd * kd * kd * kd * alpha - 1e-9));
}

/// Variables with at least `delta` literal occurrences.
inline std::vector<Var> high_degree_vars(const Formula& f, std::size_t delta) {
  std::vector<Var> out;
  for (Var v = 1; v <= f.num_vars(); ++v)
    if (f.degree(v) >= delta) out.push_back(v);
  return out;
}

namespace detail {

inline std::size_t bad_count(const Clause& c, const std::vector<char>& bad_var) {
  std::size_t count = 0;
  for (const Literal& l : c) count += bad_var[l.var] != 0;
  return count;
}

}  // namespace detail

/// Bad components of a classification: connected components of the graph on
/// bad variables where two variables are adjacent iff they share a bad clause.
inline std::vector<std::vector<Var>> bad_components(const Classification& cl, const Formula& f) {
  const std::size_t n = f.num_vars();
  std::vector<Var> parent(n + 1);
  std::iota(parent.begin(), parent.end(), Var{0});
  auto find = [&](Var v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (ClauseId c : cl.c_bad) {
    const Clause& clause = f.clause(c);
    for (std::size_t i = 1; i < clause.size(); ++i) {
      const Var a = find(clause[0].var), b = find(clause[i].var);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<std::vector<Var>> by_root(n + 1);
  for (Var v : cl.v_bad) by_root[find(v)].push_back(v);
  std::vector<std::vector<Var>> out;
  for (auto& comp : by_root)
    if (!comp.empty()) out.push_back(std::move(comp));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

/// Least fixed point of: V_0 = HD(f), C_i = {c : |vbl(c) & V_i| >= zeta*k},
/// V_{i+1} = V_i | vbl(C_i). Clause widths below k keep their own width; the
/// threshold always uses the nominal k.
inline Classification classify(const Formula& f, std::size_t delta, double zeta, std::size_t k) {
  if (!(zeta > 0.0 && zeta < 0.5)) throw InvalidArgument("zeta must lie in (0, 1/2)");
  if (delta < 1) throw InvalidArgument("delta must be at least 1");
  Classification cl;
  cl.delta = delta;
  cl.zeta = zeta;
  cl.k = k;
  cl.threshold = zeta_threshold(zeta, k);
  cl.bad_var.assign(f.num_vars() + 1, 0);
  cl.bad_clause.assign(f.num_clauses(), 0);
  for (Var v : high_degree_vars(f, delta)) cl.bad_var[v] = 1;

  for (;;) {
    ++cl.iterations;
    bool grew = false;
    for (ClauseId c = 0; c < f.num_clauses(); ++c) {
      cl.bad_clause[c] = detail::bad_count(f.clause(c), cl.bad_var) >= cl.threshold;
    }
    for (ClauseId c = 0; c < f.num_clauses(); ++c) {
      if (!cl.bad_clause[c]) continue;
      for (const Literal& l : f.clause(c))
        if (!cl.bad_var[l.var]) {
          cl.bad_var[l.var] = 1;
          grew = true;
        }
    }
    if (!grew) break;
  }

  for (Var v = 1; v <= f.num_vars(); ++v) (cl.bad_var[v] ? cl.v_bad : cl.v_good).push_back(v);
  for (ClauseId c = 0; c < f.num_clauses(); ++c) (cl.bad_clause[c] ? cl.c_bad : cl.c_good).push_back(c);
  cl.bad_components = bad_components(cl, f);
  return cl;
}

/// Induced good CNF together with diagnostics on its width and degree
/// guarantees.
struct InducedFormula {
  Formula formula;
  /// origin[i] is the id in the input formula of clause i.
  std::vector<ClauseId> origin;
  std::vector<std::string> diagnostics;
};

/// Keeps the good clauses with their bad literals deleted. Every output clause
/// should have width in [(1 - zeta) k, k] and every variable degree at most
/// delta; a violation throws RegimeViolation unless `force` is set, in which
/// case it is only recorded in the diagnostics.
inline InducedFormula good_induced_formula(const Formula& f, const Classification& cl,
                                           bool force = false) {
  InducedFormula out;
  std::vector<Clause> kept;
  const double min_width = (1.0 - cl.zeta) * static_cast<double>(cl.k) - 1e-9;
  for (ClauseId c : cl.c_good) {
    Clause reduced;
    for (const Literal& l : f.clause(c))
      if (!cl.is_bad(l.var)) reduced.push_back(l);
    if (static_cast<double>(reduced.size()) < min_width || reduced.size() > cl.k)
      out.diagnostics.push_back("clause " + std::to_string(c) + " has width " +
                                std::to_string(reduced.size()) + " outside [(1-zeta)k, k]");
    kept.push_back(std::move(reduced));
    out.origin.push_back(c);
  }
  out.formula = Formula(f.num_vars(), std::move(kept), /*allow_empty_clauses=*/true);
  for (Var v = 1; v <= f.num_vars(); ++v)
    if (out.formula.degree(v) > cl.delta)
      out.diagnostics.push_back("variable " + std::to_string(v) + " has degree " +
                                std::to_string(out.formula.degree(v)) + " above delta");
  if (!out.diagnostics.empty() && !force)
    throw RegimeViolation("induced good formula: " + out.diagnostics.front());
  return out;
}

}  // namespace marksat
