// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "marksat/classifier.hpp"
#include "marksat/clause_graph.hpp"
#include "marksat/engine.hpp"
#include "marksat/errors.hpp"
#include "marksat/formula.hpp"
#include "marksat/marginals.hpp"
#include "marksat/marking.hpp"

namespace marksat {

// ---------------------------------------------------------------- looseness

struct LooseWitness {
  Var var = 0;
  bool ok = false;
  /// Hamming distance from sigma to the witness (0 on failure).
  std::size_t distance = 0;
  /// Variables of the re-solved component.
  std::size_t component_vars = 0;
  std::optional<Assignment> witness;
};

/// Flips v by re-solving its component of the formula pinned on the marked
/// values of sigma other than v. The witness is the closest such solution.
/// The classification does not change the construction: bad variables are
/// never marked, so for them the pinning is all of sigma(M).
inline LooseWitness certify_loose(const Formula& f, const Marking& m, const Classification* cl,
                                  const Assignment& sigma, Var v, const Limits& limits = {}) {
  (void)cl;
  if (sigma.size() != f.num_vars()) throw InvalidArgument("sigma has the wrong length");
  if (v < 1 || v > f.num_vars()) throw InvalidArgument("variable out of range");
  if (!is_satisfying(f, sigma)) throw InvalidArgument("sigma does not satisfy the formula");
  detail::Engine e(f, limits);
  for (Var u : m.vars)
    if (u != v) e.assign(u, sigma[u]);
  LooseWitness w;
  w.var = v;
  const detail::Component comp = e.component_of(v);
  w.component_vars = comp.vars.size();
  Assignment tau = sigma;
  if (comp.clauses.empty()) {
    tau.flip(v);
  } else {
    const auto sol = e.nearest_solution(comp, sigma, v, !sigma[v]);
    if (!sol) return w;
    for (std::size_t i = 0; i < comp.vars.size(); ++i) tau.set(comp.vars[i], (*sol)[i] != 0);
  }
  w.ok = true;
  w.distance = hamming(sigma, tau);
  w.witness = std::move(tau);
  return w;
}

struct LoosenessReport {
  std::vector<LooseWitness> vars;  // index v - 1
  std::vector<Var> failures;
  std::size_t max_distance = 0;

  bool all_loose() const { return failures.empty(); }
};

inline LoosenessReport looseness_report(const Formula& f, const Marking& m, const Classification* cl,
                                        const Assignment& sigma, const Limits& limits = {}) {
  LoosenessReport r;
  for (Var v = 1; v <= f.num_vars(); ++v) {
    LooseWitness w = certify_loose(f, m, cl, sigma, v, limits);
    if (w.ok) {
      r.max_distance = std::max(r.max_distance, w.distance);
    } else {
      r.failures.push_back(v);
    }
    r.vars.push_back(std::move(w));
  }
  return r;
}

/// Looseness over several solutions: how often each variable fails and the
/// largest flip distance seen.
struct LoosenessAggregate {
  std::size_t samples = 0;
  /// Solutions for which every variable was certified.
  std::size_t all_loose = 0;
  std::vector<std::size_t> failure_counts;  // index v - 1
  std::size_t max_distance = 0;
  std::size_t total_failures = 0;
};

inline LoosenessAggregate aggregate_looseness(const Formula& f, const Marking& m, const Classification* cl,
                                              std::span<const Assignment> sigmas, const Limits& limits = {}) {
  LoosenessAggregate a;
  a.failure_counts.assign(f.num_vars(), 0);
  for (const Assignment& s : sigmas) {
    const LoosenessReport r = looseness_report(f, m, cl, s, limits);
    ++a.samples;
    a.all_loose += r.all_loose();
    a.max_distance = std::max(a.max_distance, r.max_distance);
    a.total_failures += r.failures.size();
    for (Var v : r.failures) ++a.failure_counts[v - 1];
  }
  return a;
}

// ----------------------------------------------------------- solution graph

struct SolutionGraphSummary {
  std::size_t d = 0;
  std::size_t num_solutions = 0;
  std::vector<std::size_t> sizes;  // descending
  double giant_fraction = 0.0;
  /// "ball" or "pairs".
  std::string method;
};

namespace detail {

inline std::uint64_t binomial_sum(std::size_t n, std::size_t d) {
  std::uint64_t total = 0, term = 1;
  for (std::size_t i = 0; i <= std::min(n, d); ++i) {
    if (i > 0) term = term * (n - i + 1) / i;
    total += term;
    if (total > (std::uint64_t{1} << 62)) return std::uint64_t{1} << 62;
  }
  return total;
}

}  // namespace detail

/// Components of the graph on all solutions with edges between solutions at
/// Hamming distance at most d.
inline SolutionGraphSummary solution_graph(const Formula& f, std::size_t d,
                                           std::size_t cap = kDefaultEnumerationCap) {
  const std::size_t n = f.num_vars();
  const std::vector<Assignment> sols = enumerate_solutions(f, cap);
  SolutionGraphSummary s;
  s.d = d;
  s.num_solutions = sols.size();
  if (sols.empty()) return s;

  std::vector<std::uint64_t> bits(sols.size(), 0);
  for (std::size_t i = 0; i < sols.size(); ++i)
    for (Var v = 1; v <= n; ++v)
      if (sols[i][v]) bits[i] |= std::uint64_t{1} << (v - 1);

  std::vector<std::size_t> parent(sols.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  const std::uint64_t ball = detail::binomial_sum(n, d);
  const std::uint64_t m = sols.size();
  if (ball < (m + 1) / 2) {
    s.method = "ball";
    std::unordered_map<std::uint64_t, std::size_t> index;
    index.reserve(sols.size() * 2);
    for (std::size_t i = 0; i < sols.size(); ++i) index.emplace(bits[i], i);
    // Visit every point within distance d by flipping increasing bit subsets.
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < sols.size(); ++i) {
      auto rec = [&](auto&& self, std::uint64_t x, std::size_t from, std::size_t left) -> void {
        if (auto it = index.find(x); it != index.end()) unite(i, it->second);
        if (left == 0) return;
        for (std::size_t b = from; b < n; ++b) self(self, x ^ (std::uint64_t{1} << b), b + 1, left - 1);
      };
      rec(rec, bits[i], 0, d);
    }
  } else {
    s.method = "pairs";
    for (std::size_t i = 0; i < sols.size(); ++i)
      for (std::size_t j = i + 1; j < sols.size(); ++j)
        if (static_cast<std::size_t>(std::popcount(bits[i] ^ bits[j])) <= d) unite(i, j);
  }

  std::vector<std::size_t> count(sols.size(), 0);
  for (std::size_t i = 0; i < sols.size(); ++i) ++count[find(i)];
  for (std::size_t c : count)
    if (c > 0) s.sizes.push_back(c);
  std::sort(s.sizes.begin(), s.sizes.end(), std::greater<>());
  s.giant_fraction = static_cast<double>(s.sizes.front()) / static_cast<double>(sols.size());
  return s;
}

// ------------------------------------------------------------- flippability

struct FlippabilityResult {
  bool all_flippable = false;
  /// An assignment whose complement is also a solution, when one exists.
  std::optional<std::pair<Assignment, Assignment>> nae_pair;
  /// Variables that take a single value over all solutions.
  std::vector<Var> unflippable;
  /// "nae" when a not-all-equal solution settled it, else "per-variable".
  std::string method;
};

/// First assignment in lexicographic order (x1 first, 0 before 1) in which
/// every clause has both a true and a false literal.
inline std::optional<Assignment> find_nae_solution(const Formula& f, std::uint64_t max_nodes = std::uint64_t{1}
                                                                                                   << 26) {
  const std::size_t n = f.num_vars();
  std::vector<std::int8_t> val(n + 1, -1);
  std::uint64_t nodes = 0;
  auto violated = [&](Var v) {
    for (const Occurrence& o : f.occurrences(v)) {
      bool has_true = false, has_false = false, open = false;
      for (const Literal& l : f.clause(o.clause)) {
        if (val[l.var] < 0) {
          open = true;
          continue;
        }
        (l.satisfied_by(val[l.var] == 1) ? has_true : has_false) = true;
      }
      if (!open && !(has_true && has_false)) return true;
    }
    return false;
  };
  for (const Clause& c : f.clauses()) {
    // A clause mentioning one variable only cannot be not-all-equal unless it
    // holds both polarities of it.
    bool pos = false, neg = false;
    Var first = c.empty() ? 0 : c.front().var;
    bool single = true;
    for (const Literal& l : c) {
      single &= l.var == first;
      (l.positive ? pos : neg) = true;
    }
    if (c.empty() || (single && !(pos && neg))) return std::nullopt;
  }
  auto rec = [&](auto&& self, Var v) -> bool {
    if (v > n) return true;
    if (++nodes > max_nodes) throw CapExceeded("not-all-equal search exceeded its node budget", n);
    for (std::int8_t b = 0; b < 2; ++b) {
      val[v] = b;
      if (!violated(v) && self(self, v + 1)) return true;
    }
    val[v] = -1;
    return false;
  };
  if (!rec(rec, 1)) return std::nullopt;
  Assignment a(n);
  for (Var v = 1; v <= n; ++v) a.set(v, val[v] == 1);
  return a;
}

/// Decides whether every variable takes both values over the solutions. A
/// not-all-equal solution settles it at once since its complement is also a
/// solution; otherwise each variable is tested with exact counting.
inline FlippabilityResult check_flippable_all(const Formula& f, std::size_t cap = 40, const Limits& limits = {}) {
  if (f.num_vars() > cap) throw CapExceeded("flippability search cap exceeded: n = " + std::to_string(f.num_vars()),
                                            f.num_vars());
  FlippabilityResult r;
  if (auto a = find_nae_solution(f)) {
    Assignment b = *a;
    for (Var v = 1; v <= f.num_vars(); ++v) b.flip(v);
    r.all_flippable = true;
    r.nae_pair = std::pair{std::move(*a), std::move(b)};
    r.method = "nae";
    return r;
  }
  r.method = "per-variable";
  for (Var v = 1; v <= f.num_vars(); ++v) {
    bool both = true;
    for (bool b : {false, true}) {
      PartialAssignment x(f.num_vars());
      x.assign(v, b);
      both &= is_extendable(f, x, limits);
    }
    if (!both) r.unflippable.push_back(v);
  }
  r.all_flippable = r.unflippable.empty();
  return r;
}

// ------------------------------------------------------------------ 2-trees

/// Grows a 2-tree of the clause line graph inside B from root e: repeatedly
/// adds the lowest clause of B that is at distance exactly 2 from the tree
/// and adjacent to none of its members, until `target` clauses are chosen.
inline std::vector<ClauseId> extract_two_tree(const Formula& f, std::span<const ClauseId> b, ClauseId e,
                                              std::size_t target) {
  std::vector<ClauseId> pool(b.begin(), b.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (!std::binary_search(pool.begin(), pool.end(), e)) throw InvalidArgument("root clause is not in B");
  for (ClauseId c : pool)
    if (c >= f.num_clauses()) throw InvalidArgument("clause id out of range");
  if (target == 0) throw InvalidArgument("target must be positive");

  const ClauseGraph g(f, ClauseAdjacency::kSharedAny);
  if (clause_graph_components(f, ClauseAdjacency::kSharedAny, 1, nullptr, std::span<const ClauseId>(pool)).size() !=
      1)
    throw InvalidArgument("B is not connected in the line graph");
  const std::size_t k = f.max_width(), d = f.max_degree();
  if (k * d > 0 && target > std::max<std::size_t>(1, pool.size() / (k * d)))
    throw InvalidArgument("target exceeds |B| / (k d)");

  // near[c]: 1 if c is in or adjacent to the tree, 2 if at distance 2.
  std::vector<std::uint8_t> near(f.num_clauses(), 0);
  std::vector<ClauseId> tree;
  auto add = [&](ClauseId c) {
    tree.push_back(c);
    near[c] = 1;
    for (ClauseId x : g.neighbors(c)) near[x] = 1;
    for (ClauseId x : g.neighbors(c))
      for (ClauseId y : g.neighbors(x))
        if (near[y] == 0) near[y] = 2;
  };
  add(e);
  while (tree.size() < target) {
    const auto it = std::find_if(pool.begin(), pool.end(), [&](ClauseId c) { return near[c] == 2; });
    if (it == pool.end())
      throw RegimeViolation("2-tree growth stalled at " + std::to_string(tree.size()) + " of " +
                            std::to_string(target) + " clauses");
    add(*it);
  }
  std::sort(tree.begin(), tree.end());
  return tree;
}

// --------------------------------------------------------------- green/blue

enum class Color { kGreen, kBlue };

struct ColoredGraph {
  struct Edge {
    std::size_t a = 0, b = 0;
    Color color = Color::kGreen;
  };
  std::vector<Color> vertex;
  std::vector<Edge> edges;

  std::size_t size() const { return vertex.size(); }
};

namespace detail {

struct Adjacency {
  std::vector<std::vector<std::size_t>> all, green;
};

inline Adjacency adjacency(const ColoredGraph& g) {
  Adjacency adj;
  adj.all.resize(g.size());
  adj.green.resize(g.size());
  for (const auto& e : g.edges) {
    if (e.a >= g.size() || e.b >= g.size() || e.a == e.b) throw InvalidArgument("malformed edge");
    adj.all[e.a].push_back(e.b);
    adj.all[e.b].push_back(e.a);
    if (e.color == Color::kGreen) {
      adj.green[e.a].push_back(e.b);
      adj.green[e.b].push_back(e.a);
    }
  }
  for (auto* lists : {&adj.all, &adj.green})
    for (auto& l : *lists) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
  return adj;
}

/// Components of `verts` under the adjacency `adj` restricted to `allowed`.
inline std::vector<std::vector<std::size_t>> components(std::span<const std::size_t> verts,
                                                        const std::vector<std::vector<std::size_t>>& adj,
                                                        const std::vector<char>& allowed) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<char> seen(adj.size(), 0);
  for (std::size_t s : verts) {
    if (seen[s] || !allowed[s]) continue;
    std::vector<std::size_t> comp{s};
    seen[s] = 1;
    for (std::size_t h = 0; h < comp.size(); ++h)
      for (std::size_t x : adj[comp[h]])
        if (allowed[x] && !seen[x]) {
          seen[x] = 1;
          comp.push_back(x);
        }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

/// Maximal independent set of the green graph on `comp` that is also a
/// 2-tree there, grown from `root`.
inline std::vector<std::size_t> independent_two_tree(std::span<const std::size_t> comp, std::size_t root,
                                                     const std::vector<std::vector<std::size_t>>& green,
                                                     std::vector<std::uint8_t>& near) {
  std::vector<std::size_t> out;
  auto add = [&](std::size_t v) {
    out.push_back(v);
    near[v] = 1;
    for (std::size_t x : green[v]) near[x] = 1;
    for (std::size_t x : green[v])
      for (std::size_t y : green[x])
        if (near[y] == 0) near[y] = 2;
  };
  add(root);
  for (;;) {
    const auto it = std::find_if(comp.begin(), comp.end(), [&](std::size_t v) { return near[v] == 2; });
    if (it == comp.end()) break;
    add(*it);
  }
  return out;
}

}  // namespace detail

/// Selects T containing every blue vertex, a green-independent set of green
/// vertices of size at least |green| / (D + 1), and connected in G^{<=2}.
///
/// Within each component S of the green-vertex subgraph the components of the
/// green-edge subgraph are processed in turn: the first from its lowest
/// vertex, each later one from its lowest vertex joined by an edge to an
/// already processed component. Each contributes a maximal independent set
/// grown as a 2-tree.
inline std::vector<std::size_t> greenblue_select(const ColoredGraph& g, std::size_t d) {
  const std::size_t n = g.size();
  const detail::Adjacency adj = detail::adjacency(g);
  for (const auto& e : g.edges)
    if (e.color == Color::kGreen && (g.vertex[e.a] == Color::kBlue || g.vertex[e.b] == Color::kBlue))
      throw InvalidArgument("a blue vertex touches a green edge");
  for (std::size_t v = 0; v < n; ++v)
    if (adj.green[v].size() > d)
      throw InvalidArgument("vertex " + std::to_string(v) + " has more than D green edges");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n > 0 && detail::components(all, adj.all, std::vector<char>(n, 1)).size() != 1)
    throw InvalidArgument("graph is not connected");

  std::vector<char> is_green(n, 0);
  for (std::size_t v = 0; v < n; ++v) is_green[v] = g.vertex[v] == Color::kGreen;

  std::vector<std::size_t> t;
  for (std::size_t v = 0; v < n; ++v)
    if (!is_green[v]) t.push_back(v);

  std::vector<std::uint8_t> near(n, 0);
  for (const auto& s : detail::components(all, adj.all, is_green)) {
    std::vector<char> in_s(n, 0);
    for (std::size_t v : s) in_s[v] = 1;
    auto parts = detail::components(s, adj.green, in_s);
    std::vector<std::int64_t> part_of(n, -1);
    for (std::size_t i = 0; i < parts.size(); ++i)
      for (std::size_t v : parts[i]) part_of[v] = static_cast<std::int64_t>(i);
    std::vector<char> done(parts.size(), 0);

    auto run = [&](std::size_t i, std::size_t root) {
      for (std::size_t v : detail::independent_two_tree(parts[i], root, adj.green, near)) t.push_back(v);
      done[i] = 1;
    };
    run(0, parts[0].front());
    for (std::size_t processed = 1; processed < parts.size(); ++processed) {
      std::optional<std::pair<std::size_t, std::size_t>> next;  // (part, root)
      for (std::size_t i = 0; i < parts.size() && !next; ++i) {
        if (done[i]) continue;
        for (std::size_t a : parts[i]) {
          const bool linked = std::any_of(adj.all[a].begin(), adj.all[a].end(), [&](std::size_t b) {
            return in_s[b] && done[static_cast<std::size_t>(part_of[b])];
          });
          if (linked) {
            next = std::pair{i, a};
            break;
          }
        }
      }
      if (!next) throw std::logic_error("green component sweep found no linked component");
      run(next->first, next->second);
    }
  }
  std::sort(t.begin(), t.end());
  return t;
}

/// Coloured clause graph on `clauses`: good clauses green, bad ones blue;
/// clauses sharing a good variable joined by a green edge, otherwise by a
/// blue edge when they share a bad variable. Vertex i is clauses[i].
inline ColoredGraph colored_clause_graph(const Formula& f, const Classification& cl,
                                         std::span<const ClauseId> clauses) {
  ColoredGraph g;
  std::vector<std::int64_t> index(f.num_clauses(), -1);
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    index[clauses[i]] = static_cast<std::int64_t>(i);
    g.vertex.push_back(cl.is_bad_clause(clauses[i]) ? Color::kBlue : Color::kGreen);
  }
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    // best colour per neighbour: 0 none, 1 blue, 2 green
    std::unordered_map<std::size_t, int> link;
    for (const Literal& l : f.clause(clauses[i]))
      for (const Occurrence& o : f.occurrences(l.var)) {
        const std::int64_t j = index[o.clause];
        if (j < 0 || static_cast<std::size_t>(j) <= i) continue;
        int& c = link[static_cast<std::size_t>(j)];
        c = std::max(c, cl.is_good(l.var) ? 2 : 1);
      }
    std::vector<std::pair<std::size_t, int>> sorted(link.begin(), link.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto [j, c] : sorted) g.edges.push_back({i, j, c == 2 ? Color::kGreen : Color::kBlue});
  }
  return g;
}

/// Membership in D^(b): no two clauses of T share a good variable, and T is
/// connected in the b-th power of the clause dependency graph.
inline bool verify_dtree_membership(const Formula& f, const Classification& cl, std::span<const ClauseId> t,
                                    std::size_t b) {
  if (b < 1) throw InvalidArgument("power must be at least 1");
  if (t.empty()) return true;
  std::vector<std::int64_t> owner(f.num_vars() + 1, -1);
  for (ClauseId c : t) {
    if (c >= f.num_clauses()) return false;
    for (const Literal& l : f.clause(c)) {
      if (!cl.is_good(l.var)) continue;
      if (owner[l.var] >= 0 && owner[l.var] != static_cast<std::int64_t>(c)) return false;
      owner[l.var] = c;
    }
  }
  return clause_graph_components(f, ClauseAdjacency::kSharedAny, b, nullptr, t).size() == 1;
}

}  // namespace marksat
