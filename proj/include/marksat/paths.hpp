// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marksat/classifier.hpp"
#include "marksat/engine.hpp"
#include "marksat/formula.hpp"
#include "marksat/marginals.hpp"
#include "marksat/marking.hpp"
#include "marksat/rng.hpp"

namespace marksat {

enum class PathStage {
  kMarkedUpdate,        // one marked variable switched, its component re-solved
  kUnmarkedComponent,   // one component of the marked-pinned formula switched
  kBadComponent,        // one bad component switched (random-formula middle segment)
  kLift,                // step of a good-variable path lifted over fixed bad values
};

inline std::string to_string(PathStage s) {
  switch (s) {
    case PathStage::kMarkedUpdate: return "marked-update";
    case PathStage::kUnmarkedComponent: return "unmarked-component";
    case PathStage::kBadComponent: return "bad-component";
    case PathStage::kLift: return "lift";
  }
  return "unknown";
}

/// Sequence of solutions; step i joins entries[i] and entries[i + 1].
struct SolutionPath {
  std::vector<Assignment> entries;
  std::vector<std::size_t> distances;
  std::vector<PathStage> stages;
  /// Largest component re-solved or switched while building the path.
  std::size_t max_component = 0;

  std::size_t max_step() const {
    return distances.empty() ? 0 : *std::max_element(distances.begin(), distances.end());
  }
};

namespace detail {

struct PathStep {
  Assignment assignment;
  PathStage stage;
};

class StepLog {
 public:
  explicit StepLog(Assignment start) : last_(std::move(start)) {}
  /// Records `next` unless it repeats the previous entry.
  void push(const Assignment& next, PathStage stage) {
    if (next == last_) return;
    steps_.push_back({next, stage});
    last_ = next;
  }
  const Assignment& last() const { return last_; }
  std::vector<PathStep>& steps() { return steps_; }

 private:
  Assignment last_;
  std::vector<PathStep> steps_;
};

/// Switches the components of the formula pinned on the engine's assignment
/// from `from` to `to` one at a time, in ascending order of minimum variable.
/// A variable of `scope` lying in no unsatisfied clause is its own component.
inline void switch_components(Engine& e, std::span<const Var> scope, const Assignment& from,
                              const Assignment& to, PathStage stage, StepLog& log, std::size_t& max_component) {
  Assignment cur = from;
  for (const Component& c : e.components_of(scope)) {
    max_component = std::max(max_component, c.vars.size());
    for (Var v : c.vars) cur.set(v, to[v]);
    log.push(cur, stage);
  }
}

/// Two-stage path from `from` to `to` inside the formula pinned on `base`
/// (both endpoints agree there). Stage 1 switches the marked variables in
/// ascending order, each time re-solving only the component of the switched
/// variable with the nearest solution. Stage 2 switches the components left
/// by the target's marked values.
inline void bounded_segment(const Formula& f, const Marking& m, std::span<const Var> base, const Assignment& from,
                            const Assignment& to, PathStage marked_stage, PathStage comp_stage, const Limits& limits,
                            StepLog& log, std::size_t& max_component) {
  Engine e(f, limits);
  std::vector<char> is_base(f.num_vars() + 1, 0);
  for (Var v : base) {
    if (from[v] != to[v]) throw InvalidArgument("endpoints differ on a pinned variable");
    if (m.is_marked(v)) throw InvalidArgument("marked variable " + std::to_string(v) + " is pinned");
    is_base[v] = 1;
    e.assign(v, from[v]);
  }
  Assignment cur = from;
  for (Var v : m.vars) e.assign(v, cur[v]);

  for (Var v : m.vars) {
    if (cur[v] == to[v]) continue;
    e.unassign(v);
    const Component comp = e.component_of(v);
    max_component = std::max(max_component, comp.vars.size());
    if (comp.clauses.empty()) {
      cur.set(v, to[v]);
    } else {
      const auto sol = e.nearest_solution(comp, cur, v, to[v]);
      if (!sol)
        throw RegimeViolation("no solution switches marked variable " + std::to_string(v) +
                              " within its component");
      for (std::size_t i = 0; i < comp.vars.size(); ++i) cur.set(comp.vars[i], (*sol)[i] != 0);
    }
    e.assign(v, to[v]);
    log.push(cur, marked_stage);
  }

  std::vector<Var> scope;
  for (Var v = 1; v <= f.num_vars(); ++v)
    if (!is_base[v] && !m.is_marked(v)) scope.push_back(v);
  switch_components(e, scope, cur, to, comp_stage, log, max_component);
}

inline SolutionPath assemble(const Assignment& start, std::vector<PathStep> steps, std::size_t max_component) {
  SolutionPath p;
  p.entries.push_back(start);
  for (PathStep& s : steps) {
    if (s.assignment == p.entries.back()) continue;
    p.distances.push_back(hamming(p.entries.back(), s.assignment));
    p.stages.push_back(s.stage);
    p.entries.push_back(std::move(s.assignment));
  }
  p.max_component = max_component;
  return p;
}

inline void require_solution(const Formula& f, const Assignment& a, const char* name) {
  if (a.size() != f.num_vars()) throw InvalidArgument(std::string(name) + " has the wrong length");
  if (!is_satisfying(f, a)) throw InvalidArgument(std::string(name) + " does not satisfy the formula");
}

}  // namespace detail

/// Path between two solutions of a bounded-degree formula through marked
/// updates followed by component switches.
inline SolutionPath find_path_bounded(const Formula& f, const Marking& m, const Assignment& sigma,
                                      const Assignment& sigma_prime, const Limits& limits = {}) {
  detail::require_solution(f, sigma, "sigma");
  detail::require_solution(f, sigma_prime, "sigma'");
  detail::StepLog log(sigma);
  std::size_t max_component = 0;
  detail::bounded_segment(f, m, {}, sigma, sigma_prime, PathStage::kMarkedUpdate, PathStage::kUnmarkedComponent,
                          limits, log, max_component);
  return detail::assemble(sigma, std::move(log.steps()), max_component);
}

/// Path for formulas with bad variables: each endpoint is joined, with its bad
/// values held fixed, to a common uniform solution psi of the good formula;
/// the two lifted copies of psi are then joined by switching bad components.
inline SolutionPath find_path_random(const Formula& f, const Classification& cl, const Marking& m,
                                     const Assignment& sigma, const Assignment& sigma_prime, std::uint64_t seed,
                                     const Limits& limits = {}) {
  detail::require_solution(f, sigma, "sigma");
  detail::require_solution(f, sigma_prime, "sigma'");
  for (Var v : m.vars)
    if (cl.is_bad(v)) throw InvalidArgument("marked variable " + std::to_string(v) + " is bad");

  const InducedFormula good = good_induced_formula(f, cl, /*force=*/true);
  Rng rng(seed);
  PartialAssignment psi;
  try {
    psi = sample_conditional(good.formula, PartialAssignment(f.num_vars()), cl.v_good, rng, limits);
  } catch (const InfeasiblePinning&) {
    throw RegimeViolation("the good formula has no solution");
  }
  Assignment tau = sigma, tau_prime = sigma_prime;
  for (Var v : cl.v_good) {
    tau.set(v, psi.value(v));
    tau_prime.set(v, psi.value(v));
  }

  std::size_t max_component = 0;
  detail::StepLog first(sigma);
  detail::bounded_segment(f, m, cl.v_bad, sigma, tau, PathStage::kLift, PathStage::kLift, limits, first,
                          max_component);

  detail::StepLog middle(tau);
  {
    detail::Engine e(f, limits);
    for (Var v : cl.v_good) e.assign(v, tau[v]);
    detail::switch_components(e, cl.v_bad, tau, tau_prime, PathStage::kBadComponent, middle, max_component);
  }

  detail::StepLog last(sigma_prime);
  detail::bounded_segment(f, m, cl.v_bad, sigma_prime, tau_prime, PathStage::kLift, PathStage::kLift, limits, last,
                          max_component);

  std::vector<detail::PathStep> steps = std::move(first.steps());
  for (auto& s : middle.steps()) steps.push_back(std::move(s));
  // The second segment runs sigma' -> tau'; walk it backwards.
  auto& back = last.steps();
  for (std::size_t i = back.size(); i-- > 0;)
    if (i > 0) {
      steps.push_back({back[i - 1].assignment, PathStage::kLift});
    } else {
      steps.push_back({sigma_prime, PathStage::kLift});
    }
  return detail::assemble(sigma, std::move(steps), max_component);
}

struct PathReport {
  /// Entries that do not satisfy the formula.
  std::vector<std::size_t> unsatisfied;
  /// Steps whose distance exceeds the bound.
  std::vector<std::size_t> long_steps;
  /// Steps whose recorded distance differs from the recomputed one.
  std::vector<std::size_t> distance_mismatch;
  bool shape_error = false;
  bool endpoint_mismatch = false;
  std::size_t max_step = 0;

  bool ok() const {
    return unsatisfied.empty() && long_steps.empty() && distance_mismatch.empty() && !shape_error &&
           !endpoint_mismatch;
  }
};

/// Independent check of a path: satisfaction of every entry, recorded
/// distances, step bound and (when given) the endpoints.
inline PathReport validate_path(const Formula& f, const SolutionPath& p, std::size_t d_bound,
                                const std::optional<Assignment>& start = std::nullopt,
                                const std::optional<Assignment>& end = std::nullopt) {
  PathReport r;
  if (p.entries.empty() || p.distances.size() + 1 != p.entries.size() || p.stages.size() != p.distances.size()) {
    r.shape_error = true;
    return r;
  }
  for (std::size_t i = 0; i < p.entries.size(); ++i)
    if (!is_satisfying(f, p.entries[i])) r.unsatisfied.push_back(i);
  for (std::size_t i = 0; i + 1 < p.entries.size(); ++i) {
    const std::size_t d = p.entries[i].size() == p.entries[i + 1].size()
                              ? hamming(p.entries[i], p.entries[i + 1])
                              : static_cast<std::size_t>(-1);
    if (d != p.distances[i]) r.distance_mismatch.push_back(i);
    if (d > d_bound) r.long_steps.push_back(i);
    r.max_step = std::max(r.max_step, d);
  }
  if (start && p.entries.front() != *start) r.endpoint_mismatch = true;
  if (end && p.entries.back() != *end) r.endpoint_mismatch = true;
  return r;
}

}  // namespace marksat
