// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "marksat/errors.hpp"
#include "marksat/formula.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// Work limits for exact component computations.
struct Limits {
  /// Largest component (in variables) that may be counted or searched.
  /// Counts are held in 64 bits, so this can be at most 63.
  std::size_t max_component_vars = 63;
  /// Search-node budget for a single count, sample or search call.
  std::uint64_t max_nodes = std::uint64_t{1} << 22;
};

namespace detail {

/// Connected piece of a simplified formula: unassigned variables and the
/// unsatisfied clauses over them.
struct Component {
  std::vector<Var> vars;          // ascending
  std::vector<ClauseId> clauses;  // ascending
};

/// Exact counting, sampling and nearest-solution search over the components of
/// a formula simplified by a mutable partial assignment.
///
/// Small components are handled by bitmask enumeration. Larger ones use a
/// branching counter that splits into independent components after every
/// decision and memoizes component counts. A component is determined by its
/// variable set and its unsatisfied clauses (whose assigned literals are all
/// false), so the memo stays valid across assignment changes.
class Engine {
 public:
  static constexpr std::size_t kBruteVars = 12;
  static constexpr std::size_t kBruteSearchVars = 20;

  Engine(const Formula& f, const Limits& limits)
      : f_(f), limits_(limits), val_(f.num_vars() + 1, kUnset),
        var_stamp_(f.num_vars() + 1, 0), clause_stamp_(f.num_clauses(), 0),
        local_(f.num_vars() + 1, 0) {
    if (limits_.max_component_vars > 63) limits_.max_component_vars = 63;
  }

  const Formula& formula() const { return f_; }

  void load(const PartialAssignment& x) {
    if (x.num_vars() < f_.num_vars()) throw InvalidArgument("pinning shorter than the formula");
    for (Var v = 1; v <= f_.num_vars(); ++v) val_[v] = x.contains(v) ? (x.value(v) ? 1 : 0) : kUnset;
  }
  void clear() { std::fill(val_.begin(), val_.end(), kUnset); }

  bool assigned(Var v) const { return val_[v] != kUnset; }
  bool value(Var v) const { return val_[v] == 1; }
  void assign(Var v, bool b) { val_[v] = b ? 1 : 0; }
  void unassign(Var v) { val_[v] = kUnset; }

  PartialAssignment snapshot() const {
    PartialAssignment x(f_.num_vars());
    for (Var v = 1; v <= f_.num_vars(); ++v)
      if (assigned(v)) x.assign(v, value(v));
    return x;
  }

  bool clause_satisfied(ClauseId c) const {
    for (const Literal& l : f_.clause(c))
      if (val_[l.var] != kUnset && l.satisfied_by(val_[l.var] == 1)) return true;
    return false;
  }

  /// A clause whose literals are all assigned and false, if any.
  std::optional<ClauseId> falsified_clause() const {
    for (ClauseId c = 0; c < f_.num_clauses(); ++c) {
      bool open = false, sat = false;
      for (const Literal& l : f_.clause(c)) {
        if (val_[l.var] == kUnset) {
          open = true;
        } else if (l.satisfied_by(val_[l.var] == 1)) {
          sat = true;
          break;
        }
      }
      if (!sat && !open) return c;
    }
    return std::nullopt;
  }

  /// Component of the unassigned variable v in the simplified formula.
  Component component_of(Var v) {
    Component comp;
    const std::uint32_t stamp = next_stamp();
    comp.vars.push_back(v);
    var_stamp_[v] = stamp;
    for (std::size_t head = 0; head < comp.vars.size(); ++head) {
      for (const Occurrence& o : f_.occurrences(comp.vars[head])) {
        if (clause_stamp_[o.clause] == stamp) continue;
        clause_stamp_[o.clause] = stamp;
        if (clause_satisfied(o.clause)) continue;
        comp.clauses.push_back(o.clause);
        for (const Literal& l : f_.clause(o.clause))
          if (val_[l.var] == kUnset && var_stamp_[l.var] != stamp) {
            var_stamp_[l.var] = stamp;
            comp.vars.push_back(l.var);
          }
      }
    }
    std::sort(comp.vars.begin(), comp.vars.end());
    std::sort(comp.clauses.begin(), comp.clauses.end());
    return comp;
  }

  /// Components covering the unassigned variables of `vars`, ordered by
  /// minimum variable. Variables in no unsatisfied clause come back as
  /// single-variable components with no clauses.
  std::vector<Component> components_of(std::span<const Var> vars) {
    std::vector<Component> out;
    std::vector<char> covered(f_.num_vars() + 1, 0);
    for (Var v : vars) {
      if (assigned(v) || covered[v]) continue;
      Component comp = component_of(v);
      for (Var u : comp.vars) covered[u] = 1;
      out.push_back(std::move(comp));
    }
    std::sort(out.begin(), out.end(),
              [](const Component& a, const Component& b) { return a.vars.front() < b.vars.front(); });
    return out;
  }

  std::vector<Component> all_components() {
    std::vector<Var> vars(f_.num_vars());
    std::iota(vars.begin(), vars.end(), Var{1});
    return components_of(vars);
  }

  /// Number of assignments of comp.vars satisfying comp.clauses.
  std::uint64_t count(const Component& comp) {
    begin_call();
    check_size(comp);
    return count_component(comp);
  }

  /// Same as count() with v fixed to b.
  std::uint64_t count_with(const Component& comp, Var v, bool b) {
    begin_call();
    check_size(comp);
    assign(v, b);
    std::vector<Var> rest;
    rest.reserve(comp.vars.size());
    for (Var u : comp.vars)
      if (u != v) rest.push_back(u);
    const std::uint64_t r = count_split(rest, comp.clauses);
    unassign(v);
    return r;
  }

  /// Number of extensions of the current assignment to all variables.
  /// Requires at most 63 unassigned variables.
  std::uint64_t count_extensions() {
    if (falsified_clause()) return 0;
    std::uint64_t total = 1;
    for (const Component& comp : all_components()) {
      const std::uint64_t c = comp.clauses.empty() ? 2 : count(comp);
      if (c == 0) return 0;
      total *= c;
    }
    return total;
  }

  /// Assigns comp.vars to a uniformly random solution of the component.
  void sample(const Component& comp, Rng& rng) {
    begin_call();
    check_size(comp);
    sample_component(comp, rng);
  }

  /// Solution of the component with `forced` set to `forced_value` that is
  /// closest in Hamming distance to `ref` on comp.vars; ties go to the
  /// lexicographically smallest bitstring over comp.vars in ascending order.
  /// Returns the values aligned with comp.vars, or nullopt if none exists.
  std::optional<std::vector<std::uint8_t>> nearest_solution(const Component& comp,
                                                            const Assignment& ref, Var forced,
                                                            bool forced_value) {
    begin_call();
    check_size(comp);
    const std::size_t nv = comp.vars.size();
    std::size_t forced_index = nv;
    for (std::size_t i = 0; i < nv; ++i)
      if (comp.vars[i] == forced) forced_index = i;
    if (forced_index == nv) throw InvalidArgument("forced variable is not in the component");
    if (nv <= kBruteSearchVars) return nearest_brute(comp, ref, forced_index, forced_value);
    return nearest_search(comp, ref, forced_index, forced_value);
  }

  std::uint64_t nodes_used() const { return nodes_; }

 private:
  static constexpr std::int8_t kUnset = -1;

  struct Masks {
    std::uint64_t pos = 0, neg = 0;
  };

  struct KeyHash {
    std::size_t operator()(const std::vector<std::uint32_t>& key) const noexcept {
      std::uint64_t h = 0xcbf29ce484222325ULL;
      for (std::uint32_t x : key) {
        h ^= x;
        h *= 0x100000001b3ULL;
      }
      return static_cast<std::size_t>(h ^ (h >> 29));
    }
  };

  std::uint32_t next_stamp() {
    if (++stamp_ == 0) {
      std::fill(var_stamp_.begin(), var_stamp_.end(), 0);
      std::fill(clause_stamp_.begin(), clause_stamp_.end(), 0);
      stamp_ = 1;
    }
    return stamp_;
  }

  void begin_call() { nodes_ = 0; }

  void tick(std::size_t size) {
    if (++nodes_ > limits_.max_nodes)
      throw CapExceeded("search budget of " + std::to_string(limits_.max_nodes) +
                            " nodes exceeded on a component of " + std::to_string(size) +
                            " variables",
                        size);
  }

  void check_size(const Component& comp) const {
    if (comp.vars.size() > limits_.max_component_vars)
      throw CapExceeded("component of " + std::to_string(comp.vars.size()) +
                            " variables exceeds the cap of " +
                            std::to_string(limits_.max_component_vars),
                        comp.vars.size());
  }

  /// Bitmask form of the unsatisfied clauses over `vars` (bit i = vars[i]).
  /// Returns false if some clause is already falsified.
  bool build_masks(std::span<const Var> vars, std::span<const ClauseId> clauses,
                   std::vector<Masks>& out, bool msb_first) {
    const std::size_t nv = vars.size();
    for (std::size_t i = 0; i < nv; ++i) local_[vars[i]] = static_cast<std::uint32_t>(msb_first ? nv - 1 - i : i);
    out.clear();
    for (ClauseId c : clauses) {
      Masks mk;
      bool sat = false;
      for (const Literal& l : f_.clause(c)) {
        if (val_[l.var] == kUnset) {
          (l.positive ? mk.pos : mk.neg) |= std::uint64_t{1} << local_[l.var];
        } else if (l.satisfied_by(val_[l.var] == 1)) {
          sat = true;
          break;
        }
      }
      if (sat) continue;
      if ((mk.pos | mk.neg) == 0) return false;
      out.push_back(mk);
    }
    return true;
  }

  static bool masks_ok(std::uint64_t a, const std::vector<Masks>& masks) {
    for (const Masks& mk : masks)
      if (((a & mk.pos) | (~a & mk.neg)) == 0) return false;
    return true;
  }

  std::uint64_t brute_count(const Component& comp) {
    if (!build_masks(comp.vars, comp.clauses, masks_, false)) return 0;
    const std::uint64_t total = std::uint64_t{1} << comp.vars.size();
    if (masks_.empty()) return total;
    std::uint64_t count = 0;
    for (std::uint64_t a = 0; a < total; ++a) count += masks_ok(a, masks_);
    return count;
  }

  std::uint64_t count_component(const Component& comp) {
    if (comp.vars.size() <= kBruteVars) return brute_count(comp);
    tick(comp.vars.size());

    std::vector<std::uint32_t> key;
    key.reserve(1 + comp.vars.size() + comp.clauses.size());
    key.push_back(static_cast<std::uint32_t>(comp.vars.size()));
    key.insert(key.end(), comp.vars.begin(), comp.vars.end());
    key.insert(key.end(), comp.clauses.begin(), comp.clauses.end());
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    const Var v = branch_var(comp);
    std::vector<Var> rest;
    rest.reserve(comp.vars.size() - 1);
    for (Var u : comp.vars)
      if (u != v) rest.push_back(u);
    std::uint64_t total = 0;
    for (int b = 0; b < 2; ++b) {
      assign(v, b != 0);
      total += count_split(rest, comp.clauses);
      unassign(v);
    }
    if (cache_.size() > (std::size_t{1} << 20)) cache_.clear();
    cache_.emplace(std::move(key), total);
    return total;
  }

  /// Most frequent variable among the component's clauses; lowest id on ties.
  Var branch_var(const Component& comp) {
    Var best = comp.vars.front();
    std::size_t best_count = 0;
    for (Var u : comp.vars) {
      std::size_t k = 0;
      for (const Occurrence& o : f_.occurrences(u))
        if (std::binary_search(comp.clauses.begin(), comp.clauses.end(), o.clause)) ++k;
      if (k > best_count) {
        best = u;
        best_count = k;
      }
    }
    return best;
  }

  /// Splits the unassigned `vars` under `clauses` into components.
  /// Returns false if a clause is falsified.
  bool split(std::span<const Var> vars, std::span<const ClauseId> clauses,
             std::vector<Component>& comps, std::vector<Var>& free_vars) {
    // Union-find over positions in `vars`.
    const std::uint32_t stamp = next_stamp();
    for (std::size_t i = 0; i < vars.size(); ++i) {
      var_stamp_[vars[i]] = stamp;
      local_[vars[i]] = static_cast<std::uint32_t>(i);
    }
    std::vector<std::uint32_t> parent(vars.size());
    std::iota(parent.begin(), parent.end(), 0u);
    auto find = [&](std::uint32_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    std::vector<ClauseId> live;
    std::vector<char> touched(vars.size(), 0);
    for (ClauseId c : clauses) {
      bool sat = false;
      std::int64_t first = -1;
      for (const Literal& l : f_.clause(c)) {
        if (val_[l.var] == kUnset) {
          if (var_stamp_[l.var] != stamp) continue;
          const std::uint32_t i = local_[l.var];
          touched[i] = 1;
          if (first < 0) {
            first = i;
          } else {
            const std::uint32_t a = find(static_cast<std::uint32_t>(first)), b = find(i);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
          }
        } else if (l.satisfied_by(val_[l.var] == 1)) {
          sat = true;
          break;
        }
      }
      if (sat) continue;
      if (first < 0) return false;
      live.push_back(c);
    }
    comps.clear();
    free_vars.clear();
    std::vector<std::int64_t> slot(vars.size(), -1);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (!touched[i]) {
        free_vars.push_back(vars[i]);
        continue;
      }
      const std::uint32_t r = find(static_cast<std::uint32_t>(i));
      if (slot[r] < 0) {
        slot[r] = static_cast<std::int64_t>(comps.size());
        comps.emplace_back();
      }
      comps[static_cast<std::size_t>(slot[r])].vars.push_back(vars[i]);
    }
    for (ClauseId c : live) {
      for (const Literal& l : f_.clause(c))
        if (val_[l.var] == kUnset && var_stamp_[l.var] == stamp) {
          comps[static_cast<std::size_t>(slot[find(local_[l.var])])].clauses.push_back(c);
          break;
        }
    }
    // vars ascending => component order follows minimum variable.
    return true;
  }

  /// Unit propagation over `clauses`. Forced variables are appended to
  /// `trail`; returns false on a conflict.
  bool propagate(std::span<const ClauseId> clauses, std::vector<Var>& trail) {
    for (bool changed = true; changed;) {
      changed = false;
      for (ClauseId c : clauses) {
        const Literal* open = nullptr;
        std::size_t n_open = 0;
        bool sat = false;
        for (const Literal& l : f_.clause(c)) {
          if (val_[l.var] == kUnset) {
            ++n_open;
            open = &l;
          } else if (l.satisfied_by(val_[l.var] == 1)) {
            sat = true;
            break;
          }
        }
        if (sat || n_open > 1) continue;
        if (n_open == 0) return false;
        assign(open->var, open->positive);
        trail.push_back(open->var);
        changed = true;
      }
    }
    return true;
  }

  struct TrailGuard {
    Engine& e;
    std::vector<Var> trail;
    ~TrailGuard() {
      for (Var u : trail) e.unassign(u);
    }
  };

  std::uint64_t count_split(std::span<const Var> vars, std::span<const ClauseId> clauses) {
    TrailGuard guard{*this, {}};
    if (!propagate(clauses, guard.trail)) return 0;
    std::vector<Var> open;
    open.reserve(vars.size());
    for (Var u : vars)
      if (!assigned(u)) open.push_back(u);
    std::vector<Component> comps;
    std::vector<Var> free_vars;
    if (!split(open, clauses, comps, free_vars)) return 0;
    std::uint64_t total = std::uint64_t{1} << free_vars.size();
    for (const Component& comp : comps) {
      const std::uint64_t c = count_component(comp);
      if (c == 0) return 0;
      total *= c;
    }
    return total;
  }

  void sample_component(const Component& comp, Rng& rng) {
    if (comp.clauses.empty()) {
      for (Var v : comp.vars) assign(v, rng.bit());
      return;
    }
    if (comp.vars.size() <= kBruteVars) {
      if (!build_masks(comp.vars, comp.clauses, masks_, false))
        throw InfeasiblePinning("component has a falsified clause");
      solutions_.clear();
      const std::uint64_t total = std::uint64_t{1} << comp.vars.size();
      for (std::uint64_t a = 0; a < total; ++a)
        if (masks_ok(a, masks_)) solutions_.push_back(a);
      if (solutions_.empty()) throw InfeasiblePinning("component has no solution");
      const std::uint64_t a = solutions_[rng.below(solutions_.size())];
      for (std::size_t i = 0; i < comp.vars.size(); ++i) assign(comp.vars[i], (a >> i) & 1);
      return;
    }
    tick(comp.vars.size());
    const Var v = branch_var(comp);
    std::vector<Var> rest;
    rest.reserve(comp.vars.size() - 1);
    for (Var u : comp.vars)
      if (u != v) rest.push_back(u);
    std::uint64_t weight[2];
    for (int b = 0; b < 2; ++b) {
      assign(v, b != 0);
      weight[b] = count_split(rest, comp.clauses);
      unassign(v);
    }
    if (weight[0] + weight[1] == 0) throw InfeasiblePinning("component has no solution");
    const bool bit = rng.below(weight[0] + weight[1]) < weight[1];
    assign(v, bit);
    // Forced values are kept: they hold in every solution of this branch.
    std::vector<Var> forced;
    propagate(comp.clauses, forced);
    std::erase_if(rest, [&](Var u) { return assigned(u); });
    std::vector<Component> comps;
    std::vector<Var> free_vars;
    split(rest, comp.clauses, comps, free_vars);
    for (const Component& sub : comps) sample_component(sub, rng);
    for (Var u : free_vars) assign(u, rng.bit());
  }

  std::optional<std::vector<std::uint8_t>> nearest_brute(const Component& comp, const Assignment& ref,
                                                         std::size_t forced_index, bool forced_value) {
    const std::size_t nv = comp.vars.size();
    // vars[0] is the most significant bit so counting order is lexicographic.
    if (!build_masks(comp.vars, comp.clauses, masks_, true)) return std::nullopt;
    std::uint64_t ref_bits = 0;
    for (std::size_t i = 0; i < nv; ++i)
      if (ref[comp.vars[i]]) ref_bits |= std::uint64_t{1} << (nv - 1 - i);
    const std::uint64_t forced_bit = std::uint64_t{1} << (nv - 1 - forced_index);
    const std::uint64_t total = std::uint64_t{1} << nv;
    std::optional<std::uint64_t> best;
    int best_dist = 1 << 30;
    for (std::uint64_t a = 0; a < total; ++a) {
      if (((a & forced_bit) != 0) != forced_value) continue;
      const int d = std::popcount(a ^ ref_bits);
      if (d >= best_dist) continue;
      if (!masks_ok(a, masks_)) continue;
      best = a;
      best_dist = d;
    }
    if (!best) return std::nullopt;
    std::vector<std::uint8_t> out(nv);
    for (std::size_t i = 0; i < nv; ++i) out[i] = (*best >> (nv - 1 - i)) & 1;
    return out;
  }

  /// Depth-first branch and bound in lexicographic order.
  std::optional<std::vector<std::uint8_t>> nearest_search(const Component& comp, const Assignment& ref,
                                                          std::size_t forced_index, bool forced_value) {
    const std::size_t nv = comp.vars.size();
    std::vector<std::uint8_t> current(nv, 0), best;
    std::size_t best_dist = nv + 1;
    auto conflict = [&](Var v) {
      for (const Occurrence& o : f_.occurrences(v)) {
        if (!std::binary_search(comp.clauses.begin(), comp.clauses.end(), o.clause)) continue;
        bool ok = false;
        for (const Literal& l : f_.clause(o.clause))
          if (val_[l.var] == kUnset || l.satisfied_by(val_[l.var] == 1)) {
            ok = true;
            break;
          }
        if (!ok) return true;
      }
      return false;
    };
    auto rec = [&](auto&& self, std::size_t i, std::size_t dist) -> void {
      if (dist >= best_dist) return;
      if (i == nv) {
        best = current;
        best_dist = dist;
        return;
      }
      tick(nv);
      const Var v = comp.vars[i];
      for (int b = 0; b < 2; ++b) {
        if (i == forced_index && (b != 0) != forced_value) continue;
        assign(v, b != 0);
        current[i] = static_cast<std::uint8_t>(b);
        if (!conflict(v)) self(self, i + 1, dist + ((b != 0) != ref[v]));
        unassign(v);
      }
    };
    rec(rec, 0, 0);
    if (best.empty()) return std::nullopt;
    return best;
  }

  const Formula& f_;
  Limits limits_;
  std::vector<std::int8_t> val_;
  std::vector<std::uint32_t> var_stamp_;
  std::vector<std::uint32_t> clause_stamp_;
  std::vector<std::uint32_t> local_;
  std::uint32_t stamp_ = 0;
  std::uint64_t nodes_ = 0;
  std::vector<Masks> masks_;
  std::vector<std::uint64_t> solutions_;
  std::unordered_map<std::vector<std::uint32_t>, std::uint64_t, KeyHash> cache_;
};

}  // namespace detail
}  // namespace marksat
