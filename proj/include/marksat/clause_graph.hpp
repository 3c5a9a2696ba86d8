// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "marksat/classifier.hpp"
#include "marksat/formula.hpp"

namespace marksat {

/// Which shared variables make two clauses adjacent.
enum class ClauseAdjacency {
  kSharedAny,   // G_Phi: any shared variable, all clauses
  kSharedGood,  // good clauses sharing a good variable
  kSharedBad,   // bad clauses sharing a (bad) variable
};

/// Adjacency lists of a clause dependency graph. Vertices outside the mode's
/// vertex set (e.g. bad clauses in kSharedGood mode) have no neighbours.
class ClauseGraph {
 public:
  ClauseGraph(const Formula& f, ClauseAdjacency mode, const Classification* cl = nullptr)
      : adj_(f.num_clauses()), member_(f.num_clauses(), 1) {
    if (mode != ClauseAdjacency::kSharedAny && cl == nullptr)
      throw InvalidArgument("good/bad clause adjacency requires a classification");
    if (mode == ClauseAdjacency::kSharedGood)
      for (ClauseId c : cl->c_bad) member_[c] = 0;
    if (mode == ClauseAdjacency::kSharedBad)
      for (ClauseId c : cl->c_good) member_[c] = 0;
    for (Var v = 1; v <= f.num_vars(); ++v) {
      if (mode == ClauseAdjacency::kSharedGood && cl->is_bad(v)) continue;
      const auto occ = f.occurrences(v);
      for (std::size_t i = 0; i < occ.size(); ++i) {
        if (!member_[occ[i].clause]) continue;
        for (std::size_t j = i + 1; j < occ.size(); ++j) {
          if (!member_[occ[j].clause] || occ[i].clause == occ[j].clause) continue;
          adj_[occ[i].clause].push_back(occ[j].clause);
          adj_[occ[j].clause].push_back(occ[i].clause);
        }
      }
    }
    for (auto& list : adj_) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }

  std::size_t size() const { return adj_.size(); }
  bool is_member(ClauseId c) const { return member_[c] != 0; }
  std::span<const ClauseId> neighbors(ClauseId c) const { return adj_[c]; }
  bool adjacent(ClauseId a, ClauseId b) const {
    return std::binary_search(adj_[a].begin(), adj_[a].end(), b);
  }

  /// Vertices within distance `radius` of `source` (source included).
  std::vector<ClauseId> ball(ClauseId source, std::size_t radius) const {
    std::vector<ClauseId> out{source};
    std::vector<std::size_t> dist(adj_.size(), kFar);
    dist[source] = 0;
    for (std::size_t head = 0; head < out.size(); ++head) {
      const ClauseId c = out[head];
      if (dist[c] == radius) continue;
      for (ClauseId d : adj_[c])
        if (dist[d] == kFar) {
          dist[d] = dist[c] + 1;
          out.push_back(d);
        }
    }
    return out;
  }

  /// Breadth-first distances from `source`; kFar marks unreachable vertices.
  std::vector<std::size_t> distances(ClauseId source) const {
    std::vector<std::size_t> dist(adj_.size(), kFar);
    std::vector<ClauseId> queue{source};
    dist[source] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head)
      for (ClauseId d : adj_[queue[head]])
        if (dist[d] == kFar) {
          dist[d] = dist[queue[head]] + 1;
          queue.push_back(d);
        }
    return dist;
  }

  static constexpr std::size_t kFar = static_cast<std::size_t>(-1);

 private:
  std::vector<std::vector<ClauseId>> adj_;
  std::vector<char> member_;
};

/// Components of `vertices` in the power graph G^{<=power}: two vertices are
/// joined when their distance in the base graph is at most `power`. Distances
/// are measured through the full base graph, so intermediate clauses need not
/// belong to `vertices`. Without an explicit vertex set the mode's natural one
/// is used (all clauses, good clauses or bad clauses).
inline std::vector<std::vector<ClauseId>> clause_graph_components(
    const Formula& f, ClauseAdjacency mode, std::size_t power, const Classification* cl = nullptr,
    std::optional<std::span<const ClauseId>> vertices = std::nullopt) {
  if (power < 1) throw InvalidArgument("power must be at least 1");
  const ClauseGraph g(f, mode, cl);
  std::vector<ClauseId> verts;
  if (vertices) {
    verts.assign(vertices->begin(), vertices->end());
  } else {
    for (ClauseId c = 0; c < f.num_clauses(); ++c)
      if (g.is_member(c)) verts.push_back(c);
  }
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());

  std::vector<ClauseId> parent(f.num_clauses());
  std::iota(parent.begin(), parent.end(), ClauseId{0});
  auto find = [&](ClauseId c) {
    while (parent[c] != c) c = parent[c] = parent[parent[c]];
    return c;
  };
  std::vector<char> in_set(f.num_clauses(), 0);
  for (ClauseId c : verts) in_set[c] = 1;
  for (ClauseId c : verts)
    for (ClauseId d : g.ball(c, power))
      if (in_set[d]) {
        const ClauseId a = find(c), b = find(d);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  std::vector<std::vector<ClauseId>> by_root(f.num_clauses());
  for (ClauseId c : verts) by_root[find(c)].push_back(c);
  std::vector<std::vector<ClauseId>> out;
  for (auto& comp : by_root)
    if (!comp.empty()) out.push_back(std::move(comp));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace marksat
