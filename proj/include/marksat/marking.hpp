// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "marksat/formula.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// A set of marked variables with per-clause quotas: every clause needs at
/// least k_m marked and k_u unmarked variables.
struct Marking {
  std::vector<Var> vars;  // ascending
  std::vector<char> mask;  // indexed by Var, size n + 1
  std::size_t k_m = 0;
  std::size_t k_u = 0;
  bool certified = false;
  std::size_t resamples = 0;

  bool is_marked(Var v) const { return v < mask.size() && mask[v] != 0; }
  std::size_t size() const { return vars.size(); }

  static Marking from_vars(std::size_t n, std::span<const Var> marked, std::size_t k_m = 0,
                           std::size_t k_u = 0, bool certified = false) {
    Marking m;
    m.mask.assign(n + 1, 0);
    for (Var v : marked) {
      if (v < 1 || v > n) throw InvalidArgument("marked variable out of range");
      m.mask[v] = 1;
    }
    for (Var v = 1; v <= n; ++v)
      if (m.mask[v]) m.vars.push_back(v);
    m.k_m = k_m;
    m.k_u = k_u;
    m.certified = certified;
    return m;
  }
};

struct MarkingOptions {
  std::size_t k_m = 1;
  std::size_t k_u = 1;
  /// Marking probability; defaults to k_m / (k_m + k_u).
  std::optional<double> p_mark{};
  std::uint64_t seed = 0;
  std::size_t max_resamples = 10000;
  /// Variables allowed to be marked (e.g. the good variables); all if unset.
  std::optional<std::vector<Var>> candidates{};
};

/// Default quotas at desk scale: k_m = ceil(0.35 (1-zeta) k), k_u = ceil(0.17 (1-zeta) k).
inline std::pair<std::size_t, std::size_t> default_quotas(std::size_t k, double zeta) {
  const double base = (1.0 - zeta) * static_cast<double>(k);
  return {static_cast<std::size_t>(std::ceil(0.35 * base - 1e-9)),
          static_cast<std::size_t>(std::ceil(0.17 * base - 1e-9))};
}

/// Ids of clauses violating the marking's quotas, ascending.
inline std::vector<ClauseId> verify_marking(const Formula& f, const Marking& m) {
  std::vector<ClauseId> bad;
  for (ClauseId c = 0; c < f.num_clauses(); ++c) {
    std::size_t marked = 0;
    for (const Literal& l : f.clause(c)) marked += m.is_marked(l.var);
    const std::size_t unmarked = f.clause(c).size() - marked;
    if (marked < m.k_m || unmarked < m.k_u) bad.push_back(c);
  }
  return bad;
}

/// Moser-Tardos search: mark each candidate independently with probability
/// p_mark, then while some clause misses a quota, re-randomize the candidates
/// of the lowest-id violating clause. Returns an uncertified marking when the
/// resample budget runs out.
inline Marking find_marking(const Formula& f, const MarkingOptions& opt) {
  for (ClauseId c = 0; c < f.num_clauses(); ++c)
    if (f.clause(c).size() < opt.k_m + opt.k_u)
      throw InvalidArgument("clause " + std::to_string(c) + " has width " +
                            std::to_string(f.clause(c).size()) + " < k_m + k_u");
  const double p = opt.p_mark.value_or(
      opt.k_m + opt.k_u == 0 ? 0.5
                             : static_cast<double>(opt.k_m) / static_cast<double>(opt.k_m + opt.k_u));
  const std::size_t n = f.num_vars();
  std::vector<char> candidate(n + 1, opt.candidates ? 0 : 1);
  candidate[0] = 0;
  if (opt.candidates)
    for (Var v : *opt.candidates) candidate[v] = 1;

  Rng rng(opt.seed);
  std::vector<char> mark(n + 1, 0);
  for (Var v = 1; v <= n; ++v)
    if (candidate[v]) mark[v] = rng.bernoulli(p);

  std::vector<std::size_t> marked_count(f.num_clauses(), 0);
  auto recount = [&](ClauseId c) {
    std::size_t k = 0;
    for (const Literal& l : f.clause(c)) k += mark[l.var];
    marked_count[c] = k;
  };
  auto violated = [&](ClauseId c) {
    return marked_count[c] < opt.k_m || f.clause(c).size() - marked_count[c] < opt.k_u;
  };
  for (ClauseId c = 0; c < f.num_clauses(); ++c) recount(c);

  Marking out;
  out.k_m = opt.k_m;
  out.k_u = opt.k_u;
  // Lowest violating id; clauses before `scan_from` are known to be fine
  // only until a resample touches them, so the scan restarts at the smallest
  // clause id affected by the last resample.
  ClauseId scan_from = 0;
  for (;;) {
    std::optional<ClauseId> bad;
    for (ClauseId c = scan_from; c < f.num_clauses(); ++c)
      if (violated(c)) {
        bad = c;
        break;
      }
    if (!bad) {
      out.certified = true;
      break;
    }
    if (out.resamples == opt.max_resamples) break;
    ++out.resamples;
    ClauseId lowest = *bad;
    for (const Literal& l : f.clause(*bad)) {
      if (!candidate[l.var]) continue;
      mark[l.var] = rng.bernoulli(p);
      for (const Occurrence& o : f.occurrences(l.var)) {
        recount(o.clause);
        lowest = std::min(lowest, o.clause);
      }
    }
    scan_from = lowest;
  }

  out.mask.assign(n + 1, 0);
  for (Var v = 1; v <= n; ++v)
    if (mark[v]) {
      out.mask[v] = 1;
      out.vars.push_back(v);
    }
  return out;
}

}  // namespace marksat
