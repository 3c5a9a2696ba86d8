// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "marksat/classifier.hpp"
#include "marksat/clause_graph.hpp"
#include "marksat/engine.hpp"
#include "marksat/errors.hpp"
#include "marksat/formula.hpp"
#include "marksat/marginals.hpp"
#include "marksat/marking.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// ceil(4 / (4(1 - 12 zeta) + 5) * k_u), at least 1. For zeta large enough
/// that the denominator is not positive the cutoff falls back to 1.
inline std::size_t default_kc(std::size_t k_u, double zeta) {
  const double denom = 4.0 * (1.0 - 12.0 * zeta) + 5.0;
  if (denom <= 0.0) return 1;
  const double raw = 4.0 / denom * static_cast<double>(k_u);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

struct CouplingOptions {
  /// Width parameter for the low/high threshold check. The check only runs
  /// when 2^(k_u - k_c) >= 2 e d s with d the largest good-variable degree.
  std::optional<double> s{};
  bool record_r = false;
};

struct CouplingDiagnostics {
  /// The loop guard is false on the final state.
  bool exit_condition = true;
  /// Clauses neither satisfied by both copies nor inside set+coupled or
  /// set+failed.
  std::vector<ClauseId> structure_violations;
  /// Failed variables (other than v0) lacking a failed clause of the right
  /// kind: any failed clause for bad variables, a plain failed clause for good
  /// ones.
  std::vector<Var> unexplained_failed;
  /// Plain and bad-component failed clauses form one piece of G^{<=2}.
  bool failed_connected = true;
  bool threshold_checked = false;
  /// Variables with r_u outside the middle window whose copies disagree.
  std::vector<Var> threshold_violations;

  bool ok() const {
    return exit_condition && structure_violations.empty() && unexplained_failed.empty() && failed_connected &&
           threshold_violations.empty();
  }
};

struct CouplingTrace {
  Var v0 = 0;
  std::size_t k_c = 0;
  std::vector<Var> v_set, v_failed, v_coupled;
  std::vector<ClauseId> e_failed, e_failed_dagger, e_failed_ddagger;
  Assignment x, y;
  /// (u, r_u) in coupling order, when recorded.
  std::vector<std::pair<Var, double>> r;
  std::size_t iterations = 0;
  CouplingDiagnostics diagnostics;

  std::size_t disagreements(std::span<const Var> vars) const {
    std::size_t d = 0;
    for (Var v : vars) d += x[v] != y[v];
    return d;
  }
};

namespace detail {

class CouplingState {
 public:
  CouplingState(const Formula& f, const Classification& cl, const PartialAssignment& lambda,
                Var v0, std::size_t k_c)
      : f_(f), cl_(cl), lambda_(f.num_vars() + 1, 0), set_(f.num_vars() + 1, 0), failed_(f.num_vars() + 1, 0),
        unsat_(f.num_clauses(), 1), in_ef_(f.num_clauses(), 0), in_efd_(f.num_clauses(), 0),
        in_efdd_(f.num_clauses(), 0), comp_absorbed_(cl.bad_components.size(), 0), comp_of_(f.num_vars() + 1, -1),
        x_(f.num_vars()), y_(f.num_vars()), k_c_(k_c) {
    for (std::size_t i = 0; i < cl.bad_components.size(); ++i)
      for (Var v : cl.bad_components[i]) comp_of_[v] = static_cast<std::int64_t>(i);
    for (Var v : lambda.domain()) {
      lambda_[v] = 1;
      set_var(v, lambda.value(v), lambda.value(v));
    }
    set_var(v0, false, true);
    fail(v0);
    remove_satisfied();
  }

  /// Bad-variable rules only; used right after initialization.
  void close_bad() {
    for (bool grew = true; grew;) grew = add_bad_clauses() | absorb_bad_components();
  }

  /// All three failure rules to a fixpoint.
  void close_all() {
    for (bool grew = true; grew;) grew = cutoff_rule() | add_bad_clauses() | absorb_bad_components();
  }

  /// Lowest clause meeting the loop guard and the lowest eligible variable.
  std::optional<std::pair<ClauseId, Var>> pick() const {
    for (ClauseId c = 0; c < f_.num_clauses(); ++c) {
      if (!unsat_[c] || !has_failed(c)) continue;
      Var best = 0;
      for (const Literal& l : f_.clause(c))
        if (open_good(l.var) && (best == 0 || l.var < best)) best = l.var;
      if (best != 0) return std::pair{c, best};
    }
    return std::nullopt;
  }

  void set_var(Var u, bool xv, bool yv) {
    set_[u] = 1;
    x_.assign(u, xv);
    y_.assign(u, yv);
  }
  void fail(Var u) { failed_[u] = 1; }
  void mark_failed_clause(ClauseId c) { in_ef_[c] = 1; }

  void remove_satisfied() {
    for (ClauseId c = 0; c < f_.num_clauses(); ++c)
      if (unsat_[c] && satisfied(c, x_) && satisfied(c, y_)) unsat_[c] = 0;
  }

  const PartialAssignment& x() const { return x_; }
  const PartialAssignment& y() const { return y_; }
  bool is_set(Var v) const { return set_[v] != 0; }
  bool is_failed(Var v) const { return failed_[v] != 0; }
  bool is_lambda(Var v) const { return lambda_[v] != 0; }

  void export_to(CouplingTrace& t) const {
    for (Var v = 1; v <= f_.num_vars(); ++v) {
      if (set_[v]) t.v_set.push_back(v);
      (failed_[v] ? t.v_failed : t.v_coupled).push_back(v);
    }
    for (ClauseId c = 0; c < f_.num_clauses(); ++c) {
      if (in_ef_[c]) t.e_failed.push_back(c);
      if (in_efd_[c]) t.e_failed_dagger.push_back(c);
      if (in_efdd_[c]) t.e_failed_ddagger.push_back(c);
    }
  }

 private:
  static bool satisfied(const Clause& c, const PartialAssignment& a) {
    for (const Literal& l : c)
      if (a.contains(l.var) && l.satisfied_by(a.value(l.var))) return true;
    return false;
  }
  bool satisfied(ClauseId c, const PartialAssignment& a) const { return satisfied(f_.clause(c), a); }

  bool open_good(Var v) const { return cl_.is_good(v) && !set_[v] && !failed_[v]; }

  bool has_failed(ClauseId c) const {
    for (const Literal& l : f_.clause(c))
      if (failed_[l.var]) return true;
    return false;
  }

  bool cutoff_rule() {
    bool grew = false;
    for (ClauseId c = 0; c < f_.num_clauses(); ++c) {
      if (!unsat_[c]) continue;
      std::size_t revealed = 0;
      for (const Literal& l : f_.clause(c)) revealed += set_[l.var] && !lambda_[l.var];
      if (revealed < k_c_) continue;
      for (const Literal& l : f_.clause(c))
        if (!set_[l.var] && !failed_[l.var]) {
          failed_[l.var] = 1;
          grew = true;
        }
      in_ef_[c] = 1;
    }
    return grew;
  }

  bool add_bad_clauses() {
    bool grew = false;
    for (ClauseId c = 0; c < f_.num_clauses(); ++c) {
      if (!unsat_[c] || !has_failed(c)) continue;
      bool open = false, pending_bad = false;
      for (const Literal& l : f_.clause(c)) {
        open |= open_good(l.var);
        pending_bad |= cl_.is_bad(l.var) && !failed_[l.var];
      }
      if (open || !pending_bad) continue;
      for (const Literal& l : f_.clause(c))
        if (cl_.is_bad(l.var)) failed_[l.var] = 1;
      in_efd_[c] = 1;
      grew = true;
    }
    return grew;
  }

  bool absorb_bad_components() {
    bool grew = false;
    for (std::size_t i = 0; i < cl_.bad_components.size(); ++i) {
      if (comp_absorbed_[i]) continue;
      const auto& comp = cl_.bad_components[i];
      if (std::none_of(comp.begin(), comp.end(), [&](Var v) { return failed_[v] != 0; })) continue;
      comp_absorbed_[i] = 1;
      for (Var v : comp) grew |= !failed_[v];
      for (Var v : comp) failed_[v] = 1;
      for (ClauseId c : cl_.c_bad)
        if (comp_of_[f_.clause(c).front().var] == static_cast<std::int64_t>(i)) in_efdd_[c] = 1;
    }
    return grew;
  }

  const Formula& f_;
  const Classification& cl_;
  std::vector<char> lambda_, set_, failed_, unsat_, in_ef_, in_efd_, in_efdd_, comp_absorbed_;
  std::vector<std::int64_t> comp_of_;
  PartialAssignment x_, y_;
  std::size_t k_c_;

  friend CouplingDiagnostics diagnose(const CouplingState&, const Formula&, const Classification&,
                                      const CouplingTrace&);
  friend bool guard_holds(const CouplingState&);
};

inline bool guard_holds(const CouplingState& s) { return s.pick().has_value(); }

inline CouplingDiagnostics diagnose(const CouplingState& s, const Formula& f, const Classification& cl,
                                    const CouplingTrace& t) {
  CouplingDiagnostics d;
  d.exit_condition = !guard_holds(s);
  for (ClauseId c = 0; c < f.num_clauses(); ++c) {
    if (CouplingState::satisfied(f.clause(c), s.x_) && CouplingState::satisfied(f.clause(c), s.y_)) continue;
    bool in_coupled = true, in_failed = true;
    for (const Literal& l : f.clause(c)) {
      if (s.set_[l.var]) continue;
      (s.failed_[l.var] ? in_coupled : in_failed) = false;
    }
    if (!in_coupled && !in_failed) d.structure_violations.push_back(c);
  }

  std::vector<char> covered_any(f.num_vars() + 1, 0), covered_plain(f.num_vars() + 1, 0);
  auto cover = [&](std::span<const ClauseId> clauses, std::vector<char>& mark) {
    for (ClauseId c : clauses)
      for (const Literal& l : f.clause(c)) mark[l.var] = 1;
  };
  cover(t.e_failed, covered_plain);
  cover(t.e_failed, covered_any);
  cover(t.e_failed_dagger, covered_any);
  cover(t.e_failed_ddagger, covered_any);
  for (Var v : t.v_failed) {
    if (v == t.v0) continue;
    if (cl.is_good(v) ? !covered_plain[v] : !covered_any[v]) d.unexplained_failed.push_back(v);
  }

  std::vector<ClauseId> core = t.e_failed;
  core.insert(core.end(), t.e_failed_ddagger.begin(), t.e_failed_ddagger.end());
  if (!core.empty()) {
    const auto comps =
        clause_graph_components(f, ClauseAdjacency::kSharedAny, 2, nullptr, std::span<const ClauseId>(core));
    d.failed_connected = comps.size() <= 1;
  }
  return d;
}

inline std::size_t max_good_degree(const Formula& f, const Classification& cl) {
  std::size_t d = 0;
  for (Var v : cl.v_good) d = std::max(d, f.degree(v));
  return d;
}

}  // namespace detail

/// Runs the coupling of mu(. | v0 = 0, lambda) and mu(. | v0 = 1, lambda).
///
/// Good variables next to failed ones are revealed in both copies through one
/// shared uniform r_u, X(u) = 1(r_u < p_u^X) and Y(u) = 1(r_u < p_u^Y), with
/// p_u the exact conditional marginals given the revealed values. When the
/// process stops the unrevealed coupled variables receive one shared sample
/// and the unrevealed failed variables independent ones.
inline CouplingTrace run_coupling(const Formula& f, const Classification& cl, const Marking& m,
                                  const PartialAssignment& lambda_pin, Var v0, std::size_t k_c, std::uint64_t seed,
                                  const Limits& limits = {}, const CouplingOptions& opts = {}) {
  const std::size_t n = f.num_vars();
  if (v0 < 1 || v0 > n) throw InvalidArgument("v0 out of range");
  if (!m.is_marked(v0)) throw InvalidArgument("v0 = " + std::to_string(v0) + " is not marked");
  if (lambda_pin.num_vars() != n) throw InvalidArgument("pinning size differs from the formula");
  if (lambda_pin.contains(v0)) throw InvalidArgument("v0 is pinned");
  for (Var v : lambda_pin.domain())
    if (!m.is_marked(v)) throw InvalidArgument("pinned variable " + std::to_string(v) + " is not marked");
  for (Var v : m.vars)
    if (cl.is_bad(v)) throw InvalidArgument("marked variable " + std::to_string(v) + " is bad");
  if (k_c == 0) throw InvalidArgument("k_c must be at least 1");

  for (bool b : {false, true}) {
    PartialAssignment x = lambda_pin;
    x.assign(v0, b);
    if (!is_extendable(f, x, limits))
      throw InfeasiblePinning("pinning has no solution with v0 = " + std::string(b ? "1" : "0"));
  }

  CouplingTrace trace;
  trace.v0 = v0;
  trace.k_c = k_c;
  Rng rng(seed);
  detail::CouplingState st(f, cl, lambda_pin, v0, k_c);
  st.close_bad();

  std::optional<double> window;
  if (opts.s) {
    const double lhs = std::ldexp(1.0, static_cast<int>(m.k_u) - static_cast<int>(k_c));
    const double rhs = 2.0 * std::numbers::e * static_cast<double>(detail::max_good_degree(f, cl)) * *opts.s;
    if (m.k_u >= k_c && lhs >= rhs) window = 1.0 / *opts.s;
  }
  std::vector<Var> threshold_violations;

  while (auto next = st.pick()) {
    const auto [e, u] = *next;
    ++trace.iterations;
    const double r = rng.uniform01();
    const Marginal px = exact_marginal(f, st.x(), u, limits);
    const Marginal py = exact_marginal(f, st.y(), u, limits);
    const bool xu = r < px.value(), yu = r < py.value();
    st.set_var(u, xu, yu);
    if (opts.record_r) trace.r.emplace_back(u, r);
    if (xu != yu) {
      st.fail(u);
      st.mark_failed_clause(e);
      if (window && std::abs(r - 0.5) > *window) threshold_violations.push_back(u);
    }
    st.remove_satisfied();
    st.close_all();
  }
  st.export_to(trace);

  // Final extension: shared draw on coupled variables, then independent
  // draws on failed ones.
  std::vector<Var> coupled_open, failed_open;
  for (Var v : trace.v_coupled)
    if (!st.is_set(v)) coupled_open.push_back(v);
  for (Var v : trace.v_failed)
    if (!st.is_set(v)) failed_open.push_back(v);
  const std::uint64_t shared = mix_seed(seed, 1);
  PartialAssignment x = st.x(), y = st.y();
  x.merge(sample_conditional(f, st.x(), coupled_open, shared, limits));
  y.merge(sample_conditional(f, st.y(), coupled_open, shared, limits));
  const PartialAssignment x_mid = x, y_mid = y;
  x.merge(sample_conditional(f, x_mid, failed_open, mix_seed(seed, 2), limits));
  y.merge(sample_conditional(f, y_mid, failed_open, mix_seed(seed, 3), limits));
  trace.x = x.to_total();
  trace.y = y.to_total();
  for (Var v : trace.v_coupled)
    if (trace.x[v] != trace.y[v])
      throw std::logic_error("coupled variable " + std::to_string(v) + " differs between the copies");

  trace.diagnostics = detail::diagnose(st, f, cl, trace);
  trace.diagnostics.threshold_checked = window.has_value();
  trace.diagnostics.threshold_violations = std::move(threshold_violations);
  return trace;
}

struct InfluenceMatrix {
  PartialAssignment pinning;
  /// Rows and columns: marked variables outside the pinning, ascending.
  std::vector<Var> vars;
  /// Row-major; entry (i, j) is mu(v_j = 1 | v_i = 0) - mu(v_j = 1 | v_i = 1).
  std::vector<double> entries;
  /// Variables whose conditioning on 0 or 1 has probability zero. Their rows
  /// are set to zero.
  std::vector<Var> infeasible;
  double max_eigenvalue = 0.0;

  std::size_t size() const { return vars.size(); }
  double operator()(std::size_t i, std::size_t j) const { return entries[i * vars.size() + j]; }
  std::size_t index(Var v) const {
    const auto it = std::lower_bound(vars.begin(), vars.end(), v);
    if (it == vars.end() || *it != v) throw InvalidArgument("variable " + std::to_string(v) + " not in the matrix");
    return static_cast<std::size_t>(it - vars.begin());
  }
  double at(Var u, Var v) const { return (*this)(index(u), index(v)); }
  /// Sum over v != u of |Psi(u, v)|.
  double row_sum(Var u) const {
    const std::size_t i = index(u);
    double s = 0.0;
    for (std::size_t j = 0; j < vars.size(); ++j)
      if (j != i) s += std::abs((*this)(i, j));
    return s;
  }
};

/// Largest eigenvalue of a square matrix with real spectrum, by power
/// iteration on A + cI where c bounds the spectral radius.
inline double max_eigenvalue(std::span<const double> a, std::size_t dim, double rel_tol = 1e-9,
                             std::size_t max_iter = 200000) {
  if (dim == 0) return 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < dim; ++j) row += std::abs(a[i * dim + j]);
    c = std::max(c, row);
  }
  if (c == 0.0) return 0.0;
  std::vector<double> x(dim), y(dim);
  for (std::size_t i = 0; i < dim; ++i) x[i] = 1.0 + 1e-3 * static_cast<double>(i + 1);
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double t : v) s += t * t;
    s = std::sqrt(s);
    for (double& t : v) t /= s;
    return s;
  };
  normalize(x);
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < dim; ++i) {
      double s = c * x[i];
      for (std::size_t j = 0; j < dim; ++j) s += a[i * dim + j] * x[j];
      y[i] = s;
    }
    const double next = normalize(y);
    std::swap(x, y);
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda - c;
}

/// Exact influence matrix on the marked variables outside the pinning, from
/// full enumeration of the solutions that agree with the pinning.
inline InfluenceMatrix exact_influence_matrix(const Formula& f, const Marking& m,
                                              const PartialAssignment& lambda_pin,
                                              std::size_t cap = kDefaultEnumerationCap) {
  if (lambda_pin.num_vars() != f.num_vars()) throw InvalidArgument("pinning size differs from the formula");
  InfluenceMatrix out;
  out.pinning = lambda_pin;
  for (Var v : m.vars)
    if (!lambda_pin.contains(v)) out.vars.push_back(v);
  const std::size_t dim = out.vars.size();
  out.entries.assign(dim * dim, 0.0);

  // ones[b][i][j] = #solutions with v_i = b and v_j = 1; cnt[b][i] = #with v_i = b.
  std::vector<std::uint64_t> ones[2] = {std::vector<std::uint64_t>(dim * dim, 0),
                                        std::vector<std::uint64_t>(dim * dim, 0)};
  std::vector<std::uint64_t> cnt[2] = {std::vector<std::uint64_t>(dim, 0), std::vector<std::uint64_t>(dim, 0)};
  const auto pinned = lambda_pin.domain();
  for (const Assignment& a : enumerate_solutions(f, cap)) {
    if (!std::all_of(pinned.begin(), pinned.end(), [&](Var v) { return a[v] == lambda_pin.value(v); })) continue;
    for (std::size_t i = 0; i < dim; ++i) {
      const int b = a[out.vars[i]] ? 1 : 0;
      ++cnt[b][i];
      for (std::size_t j = 0; j < dim; ++j) ones[b][i * dim + j] += a[out.vars[j]];
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    if (cnt[0][i] == 0 || cnt[1][i] == 0) {
      out.infeasible.push_back(out.vars[i]);
      continue;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (j == i) continue;
      out.entries[i * dim + j] = static_cast<double>(ones[0][i * dim + j]) / static_cast<double>(cnt[0][i]) -
                                 static_cast<double>(ones[1][i * dim + j]) / static_cast<double>(cnt[1][i]);
    }
  }
  out.max_eigenvalue = max_eigenvalue(out.entries, dim);
  return out;
}

struct RateEstimate {
  double mean = 0.0;
  /// One binomial (or sample) standard error.
  double sigma = 0.0;
};

struct CouplingEstimate {
  std::size_t trials = 0;
  Var v0 = 0;
  /// Marked variables other than v0 outside the pinning, with their
  /// disagreement rates Pr(X(v) != Y(v)).
  std::vector<Var> vars;
  std::vector<RateEstimate> rates;
  /// Expected number of disagreeing marked variables other than v0.
  RateEstimate total;
  /// Expected number of plain failed clauses.
  RateEstimate failed_clauses;
  /// Runs whose diagnostics reported a problem.
  std::size_t diagnostic_failures = 0;
};

/// Monte Carlo estimates of the coupling's disagreement rates over `trials`
/// runs with seeds mix_seed(seed, t).
inline CouplingEstimate coupling_influence_bound(const Formula& f, const Classification& cl, const Marking& m,
                                                 const PartialAssignment& lambda_pin, Var v0, std::size_t k_c,
                                                 std::size_t trials, std::uint64_t seed, const Limits& limits = {},
                                                 const CouplingOptions& opts = {}) {
  if (trials == 0) throw InvalidArgument("trials must be positive");
  CouplingEstimate est;
  est.trials = trials;
  est.v0 = v0;
  for (Var v : m.vars)
    if (v != v0 && !lambda_pin.contains(v)) est.vars.push_back(v);
  std::vector<std::uint64_t> hits(est.vars.size(), 0);
  double sum = 0.0, sum_sq = 0.0, ef = 0.0, ef_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const CouplingTrace tr = run_coupling(f, cl, m, lambda_pin, v0, k_c, mix_seed(seed, t), limits, opts);
    double d = 0.0;
    for (std::size_t i = 0; i < est.vars.size(); ++i)
      if (tr.x[est.vars[i]] != tr.y[est.vars[i]]) {
        ++hits[i];
        d += 1.0;
      }
    sum += d;
    sum_sq += d * d;
    const double e = static_cast<double>(tr.e_failed.size());
    ef += e;
    ef_sq += e * e;
    est.diagnostic_failures += !tr.diagnostics.ok();
  }
  const double T = static_cast<double>(trials);
  auto sample_stats = [&](double s, double sq) {
    const double mean = s / T;
    const double var = std::max(0.0, sq / T - mean * mean);
    return RateEstimate{mean, std::sqrt(var / T)};
  };
  for (std::uint64_t h : hits) {
    const double p = static_cast<double>(h) / T;
    est.rates.push_back({p, std::sqrt(p * (1.0 - p) / T)});
  }
  est.total = sample_stats(sum, sum_sq);
  est.failed_clauses = sample_stats(ef, ef_sq);
  return est;
}

}  // namespace marksat
