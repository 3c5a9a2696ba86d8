// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "marksat/engine.hpp"
#include "marksat/formula.hpp"
#include "marksat/marking.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// Exact probability as a ratio of solution counts.
struct Marginal {
  std::uint64_t ones = 0;
  std::uint64_t total = 1;

  double value() const { return static_cast<double>(ones) / static_cast<double>(total); }
  /// max over c of mu(v = c).
  double max_side() const { return std::max(value(), 1.0 - value()); }

  friend bool operator==(const Marginal& a, const Marginal& b) {
    __extension__ using wide = unsigned __int128;
    return static_cast<wide>(a.ones) * b.total == static_cast<wide>(b.ones) * a.total;
  }
};

/// One component of a simplified formula with a sampled solution.
struct ComponentSample {
  std::vector<Var> vars;
  PartialAssignment assignment;
  std::uint64_t weight = 0;  // number of solutions of the component
};

struct SampleStats {
  std::size_t max_component = 0;
  std::size_t components = 0;
};

namespace detail {

inline void require_consistent(Engine& e) {
  if (auto c = e.falsified_clause())
    throw InfeasiblePinning("pinning falsifies clause " + std::to_string(*c));
}

}  // namespace detail

/// mu_v(1 | x), counted over the component of v in the simplified formula.
inline Marginal exact_marginal(const Formula& f, const PartialAssignment& x, Var v,
                               const Limits& limits = {}) {
  if (v < 1 || v > f.num_vars()) throw InvalidArgument("variable out of range");
  detail::Engine e(f, limits);
  e.load(x);
  detail::require_consistent(e);
  if (e.assigned(v)) return {e.value(v) ? 1u : 0u, 1};
  const detail::Component comp = e.component_of(v);
  if (comp.clauses.empty()) return {1, 2};
  const std::uint64_t total = e.count(comp);
  if (total == 0) throw InfeasiblePinning("component of variable " + std::to_string(v) + " has no solution");
  return {e.count_with(comp, v, true), total};
}

/// Number of satisfying extensions of x (at most 63 free variables).
inline std::uint64_t count_extensions(const Formula& f, const PartialAssignment& x,
                                      const Limits& limits = {}) {
  detail::Engine e(f, limits);
  e.load(x);
  return e.count_extensions();
}

/// True when x extends to a satisfying assignment.
inline bool is_extendable(const Formula& f, const PartialAssignment& x, const Limits& limits = {}) {
  detail::Engine e(f, limits);
  e.load(x);
  if (e.falsified_clause()) return false;
  for (const detail::Component& comp : e.all_components())
    if (!comp.clauses.empty() && e.count(comp) == 0) return false;
  return true;
}

/// Uniform solution of the component of v in the simplified formula.
inline ComponentSample sample_component(const Formula& f, const PartialAssignment& x, Var v, Rng& rng,
                                        const Limits& limits = {}) {
  detail::Engine e(f, limits);
  e.load(x);
  detail::require_consistent(e);
  if (e.assigned(v)) throw InvalidArgument("variable is pinned");
  const detail::Component comp = e.component_of(v);
  ComponentSample out{comp.vars, PartialAssignment(f.num_vars()),
                      comp.clauses.empty() ? std::uint64_t{2} : e.count(comp)};
  if (out.weight == 0) throw InfeasiblePinning("component has no solution");
  e.sample(comp, rng);
  for (Var u : comp.vars) out.assignment.assign(u, e.value(u));
  return out;
}

/// Exact draw from mu_targets(. | x). Components meeting the targets are
/// sampled in ascending order of their minimum variable; the result is the
/// projection onto the targets.
inline PartialAssignment sample_conditional(const Formula& f, const PartialAssignment& x,
                                            std::span<const Var> targets, Rng& rng,
                                            const Limits& limits = {}, SampleStats* stats = nullptr) {
  detail::Engine e(f, limits);
  e.load(x);
  detail::require_consistent(e);
  for (Var t : targets) {
    if (t < 1 || t > f.num_vars()) throw InvalidArgument("target out of range");
    if (e.assigned(t)) throw InvalidArgument("target " + std::to_string(t) + " is pinned");
  }
  std::vector<detail::Component> comps = e.components_of(targets);
  for (const detail::Component& comp : comps) {
    if (stats) {
      stats->max_component = std::max(stats->max_component, comp.vars.size());
      ++stats->components;
    }
    e.sample(comp, rng);
  }
  PartialAssignment out(f.num_vars());
  for (Var t : targets) out.assign(t, e.value(t));
  return out;
}

inline PartialAssignment sample_conditional(const Formula& f, const PartialAssignment& x,
                                            std::span<const Var> targets, std::uint64_t seed,
                                            const Limits& limits = {}) {
  Rng rng(seed);
  return sample_conditional(f, x, targets, rng, limits);
}

/// Uniform satisfying assignment of f.
inline Assignment sample_solution(const Formula& f, Rng& rng, const Limits& limits = {}) {
  std::vector<Var> all(f.num_vars());
  std::iota(all.begin(), all.end(), Var{1});
  return sample_conditional(f, PartialAssignment(f.num_vars()), all, rng, limits).to_total();
}

struct UniformityViolation {
  Var var = 0;
  PartialAssignment pinning;
  Marginal marginal;
};

struct UniformityReport {
  double s = 0.0;
  double worst = 0.5;
  double bound = 0.0;
  std::size_t tested = 0;
  /// Distinct (variable, pinning) pairs whose marginal exceeds the bound.
  std::vector<UniformityViolation> violations;
};

inline double uniformity_bound(double s) { return 0.5 * std::exp(1.0 / s); }

/// Random probes of Def-style local uniformity: S is a random subset of the
/// marked variables, X on S is drawn from mu_S, and v is a random variable
/// outside S. Records every exact marginal above (1/2) e^{1/s}.
inline UniformityReport check_local_uniformity(const Formula& f, const Marking& m, double s,
                                               std::size_t trials, std::uint64_t seed,
                                               const Limits& limits = {}) {
  if (!(s > 0.0)) throw InvalidArgument("s must be positive");
  UniformityReport rep;
  rep.s = s;
  rep.bound = uniformity_bound(s);
  if (f.num_vars() == 0) return rep;
  Rng rng(seed);
  std::set<std::pair<Var, std::string>> seen;
  const PartialAssignment empty(f.num_vars());
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<Var> subset;
    for (Var v : m.vars)
      if (rng.bit()) subset.push_back(v);
    std::vector<Var> outside;
    std::vector<char> in_s(f.num_vars() + 1, 0);
    for (Var v : subset) in_s[v] = 1;
    for (Var v = 1; v <= f.num_vars(); ++v)
      if (!in_s[v]) outside.push_back(v);
    if (outside.empty()) continue;
    PartialAssignment pin = sample_conditional(f, empty, subset, rng, limits);
    const Var v = outside[rng.below(outside.size())];
    const Marginal mu = exact_marginal(f, pin, v, limits);
    ++rep.tested;
    rep.worst = std::max(rep.worst, mu.max_side());
    if (mu.max_side() > rep.bound && seen.emplace(v, pin.to_string()).second)
      rep.violations.push_back({v, std::move(pin), mu});
  }
  return rep;
}

/// Cycle rank of the variable-clause incidence graph of the given clauses:
/// edges - vertices + connected components.
inline std::size_t tree_excess(const Formula& f, std::span<const ClauseId> clauses) {
  std::vector<ClauseId> ids(clauses.begin(), clauses.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  // Vertices: clauses 0..|ids|-1, then variables.
  std::vector<Var> vars;
  for (ClauseId c : ids)
    for (const Literal& l : f.clause(c)) vars.push_back(l.var);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  const std::size_t nv = ids.size() + vars.size();
  std::vector<std::size_t> parent(nv);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::size_t edges = 0, comps = nv;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (const Literal& l : f.clause(ids[i])) {
      ++edges;
      const std::size_t j =
          ids.size() + static_cast<std::size_t>(std::lower_bound(vars.begin(), vars.end(), l.var) - vars.begin());
      const std::size_t a = find(i), b = find(j);
      if (a != b) {
        parent[a] = b;
        --comps;
      }
    }
  return edges + comps - nv;
}

}  // namespace marksat
