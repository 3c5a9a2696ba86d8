// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marksat/engine.hpp"
#include "marksat/formula.hpp"
#include "marksat/marginals.hpp"
#include "marksat/marking.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// ceil((1/theta)^2 * ln n * 50), at least 1.
inline std::size_t default_t_max(double theta, std::size_t n) {
  const double t = (1.0 / theta) * (1.0 / theta) * std::log(static_cast<double>(std::max<std::size_t>(n, 1))) * 50.0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t - 1e-9)));
}

struct SamplerConfig {
  /// Fraction of the marked variables resampled per step.
  double theta = 0.3;
  /// Number of block updates; default_t_max(theta, n) when unset.
  std::optional<std::size_t> t_max{};
  std::uint64_t seed = 0;
  Limits limits{};
  /// Starting values on the marked variables; uniform bits when unset.
  std::optional<PartialAssignment> init{};
  /// Consecutive infeasible draws tolerated before giving up.
  std::size_t max_rejects = 100;
  /// With at most this many marked variables, solution counts for every
  /// marked configuration are tabulated once and block updates draw from the
  /// table. The law of each update is unchanged.
  std::size_t marked_table_limit = 16;
  bool record_steps = false;
};

struct ChainTrace {
  std::size_t steps = 0;
  std::size_t block_size = 0;
  /// Largest component met by any conditional draw (including the extension).
  std::size_t max_component = 0;
  /// Per-step largest component; filled when record_steps is set and the
  /// table is not in use.
  std::vector<std::size_t> step_max_component;
  /// Infeasible initial states or update conditionings that were redrawn.
  std::size_t rejects = 0;
  bool used_table = false;
  Assignment final_assignment;
};

struct ChainResult {
  Assignment assignment;
  ChainTrace trace;
};

/// Theta-block heat-bath dynamics on the marked variables followed by an exact
/// extension to the unmarked ones.
///
/// Each step picks a uniform subset S of the marked variables of size
/// ceil(theta |M|) and redraws X(S) from mu_S(. | X(M \ S)).
class BlockDynamics {
 public:
  BlockDynamics(const Formula& f, const Marking& m, SamplerConfig cfg)
      : f_(f), m_(m), cfg_(std::move(cfg)) {
    if (!(cfg_.theta > 0.0 && cfg_.theta <= 1.0)) throw InvalidArgument("theta must lie in (0, 1]");
    block_ = m_.vars.empty()
                 ? 0
                 : std::clamp<std::size_t>(
                       static_cast<std::size_t>(std::ceil(cfg_.theta * static_cast<double>(m_.vars.size()) - 1e-9)),
                       1, m_.vars.size());
    t_max_ = cfg_.t_max.value_or(default_t_max(cfg_.theta, f_.num_vars()));
    for (Var v = 1; v <= f_.num_vars(); ++v)
      if (!m_.is_marked(v)) unmarked_.push_back(v);
    if (m_.vars.size() <= cfg_.marked_table_limit && unmarked_.size() <= 63) build_table();
  }

  std::size_t block_size() const { return block_; }
  std::size_t t_max() const { return t_max_; }
  bool uses_table() const { return !table_.empty(); }

  /// Runs the marked chain for t_max steps and returns X(M).
  PartialAssignment run_marked(Rng& rng, ChainTrace* trace = nullptr) {
    ChainTrace local;
    ChainTrace& tr = trace ? *trace : local;
    tr.block_size = block_;
    tr.used_table = uses_table();
    PartialAssignment x = initial_state(rng, tr);
    if (m_.vars.empty()) return x;

    std::vector<std::size_t> order(m_.vars.size());
    for (std::size_t t = 0; t < t_max_; ++t) {
      for (std::size_t attempt = 0;; ++attempt) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t j = 0; j < block_; ++j)
          std::swap(order[j], order[j + rng.below(order.size() - j)]);
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(block_));
        if (update(x, std::span<const std::size_t>(order.data(), block_), rng, tr)) break;
        ++tr.rejects;
        if (attempt + 1 >= cfg_.max_rejects)
          throw InfeasiblePinning("block update rejected " + std::to_string(cfg_.max_rejects) + " times");
      }
      ++tr.steps;
    }
    return x;
  }

  /// Full run: marked chain, then X(V \ M) ~ mu(. | X(M)).
  ChainResult run(Rng& rng) {
    ChainResult out;
    PartialAssignment x = run_marked(rng, &out.trace);
    SampleStats stats;
    PartialAssignment rest = sample_conditional(f_, x, unmarked_, rng, cfg_.limits, &stats);
    out.trace.max_component = std::max(out.trace.max_component, stats.max_component);
    x.merge(rest);
    out.assignment = x.to_total();
    out.trace.final_assignment = out.assignment;
    return out;
  }

 private:
  void build_table() {
    const std::size_t nm = m_.vars.size();
    table_.assign(std::size_t{1} << nm, 0);
    detail::Engine e(f_, cfg_.limits);
    for (std::uint64_t c = 0; c < table_.size(); ++c) {
      e.clear();
      for (std::size_t i = 0; i < nm; ++i) e.assign(m_.vars[i], (c >> i) & 1);
      table_[c] = e.count_extensions();
    }
    if (std::all_of(table_.begin(), table_.end(), [](std::uint64_t w) { return w == 0; }))
      throw InfeasiblePinning("formula has no solution");
  }

  std::uint64_t encode(const PartialAssignment& x) const {
    std::uint64_t c = 0;
    for (std::size_t i = 0; i < m_.vars.size(); ++i)
      if (x.value(m_.vars[i])) c |= std::uint64_t{1} << i;
    return c;
  }

  bool feasible(const PartialAssignment& x) const {
    if (uses_table()) return table_[encode(x)] > 0;
    return is_extendable(f_, x, cfg_.limits);
  }

  PartialAssignment initial_state(Rng& rng, ChainTrace& tr) {
    if (cfg_.init) {
      PartialAssignment x(f_.num_vars());
      for (Var v : m_.vars) {
        if (!cfg_.init->contains(v)) throw InvalidArgument("initial state misses marked variable " + std::to_string(v));
        x.assign(v, cfg_.init->value(v));
      }
      if (!feasible(x)) throw InfeasiblePinning("initial marked state has no extension");
      return x;
    }
    for (std::size_t attempt = 0; attempt < cfg_.max_rejects; ++attempt) {
      PartialAssignment x(f_.num_vars());
      for (Var v : m_.vars) x.assign(v, rng.bit());
      if (feasible(x)) return x;
      ++tr.rejects;
    }
    throw InfeasiblePinning("no feasible initial marked state in " + std::to_string(cfg_.max_rejects) + " draws");
  }

  /// Redraws the marked positions `block`. Returns false (state unchanged)
  /// when X(M \ S) has no extension.
  bool update(PartialAssignment& x, std::span<const std::size_t> block, Rng& rng, ChainTrace& tr) {
    if (uses_table()) {
      std::uint64_t base = encode(x);
      for (std::size_t i : block) base &= ~(std::uint64_t{1} << i);
      const std::size_t combos = std::size_t{1} << block.size();
      weights_.resize(combos);
      std::uint64_t total = 0;
      for (std::size_t y = 0; y < combos; ++y) {
        std::uint64_t c = base;
        for (std::size_t j = 0; j < block.size(); ++j)
          if ((y >> j) & 1) c |= std::uint64_t{1} << block[j];
        weights_[y] = table_[c];
        total += table_[c];
      }
      if (total == 0) return false;
      std::uint64_t r = rng.below(total);
      std::size_t y = 0;
      while (r >= weights_[y]) r -= weights_[y++];
      for (std::size_t j = 0; j < block.size(); ++j) x.assign(m_.vars[block[j]], (y >> j) & 1);
      return true;
    }
    PartialAssignment cond = x;
    std::vector<Var> targets;
    targets.reserve(block.size());
    for (std::size_t i : block) {
      targets.push_back(m_.vars[i]);
      cond.erase(m_.vars[i]);
    }
    SampleStats stats;
    try {
      const PartialAssignment drawn = sample_conditional(f_, cond, targets, rng, cfg_.limits, &stats);
      for (Var v : targets) x.assign(v, drawn.value(v));
    } catch (const InfeasiblePinning&) {
      return false;
    }
    tr.max_component = std::max(tr.max_component, stats.max_component);
    if (cfg_.record_steps) tr.step_max_component.push_back(stats.max_component);
    return true;
  }

  const Formula& f_;
  const Marking& m_;
  SamplerConfig cfg_;
  std::size_t block_ = 0;
  std::size_t t_max_ = 0;
  std::vector<Var> unmarked_;
  std::vector<std::uint64_t> table_;
  std::vector<std::uint64_t> weights_;
};

inline ChainResult run_block_dynamics(const Formula& f, const Marking& m, const SamplerConfig& cfg) {
  BlockDynamics chain(f, m, cfg);
  Rng rng(cfg.seed);
  return chain.run(rng);
}

struct TvEstimate {
  double tv = 0.0;
  /// Sum over cells of the binomial 95% half-widths, halved like the TV.
  double half_width = 0.0;
  std::size_t runs = 0;
  std::size_t support = 0;
  /// Runs whose output was not a solution (always 0 for a correct sampler).
  std::size_t outside_support = 0;
};

/// Empirical distribution of `runs` independent chains (seeds derived from
/// cfg.seed) against the uniform law on the enumerated solutions.
inline TvEstimate estimate_tv(const Formula& f, const Marking& m, const SamplerConfig& cfg, std::size_t runs,
                              std::size_t cap = kDefaultEnumerationCap) {
  const auto sols = enumerate_solutions(f, cap);
  if (sols.empty()) throw InfeasiblePinning("formula has no solution");
  std::map<Assignment, std::size_t> index;
  for (std::size_t i = 0; i < sols.size(); ++i) index.emplace(sols[i], i);
  std::vector<std::uint64_t> hist(sols.size(), 0);
  TvEstimate out;
  out.runs = runs;
  out.support = sols.size();
  BlockDynamics chain(f, m, cfg);
  for (std::size_t r = 0; r < runs; ++r) {
    Rng rng(mix_seed(cfg.seed, r));
    const Assignment a = chain.run(rng).assignment;
    const auto it = index.find(a);
    if (it == index.end()) {
      ++out.outside_support;
    } else {
      ++hist[it->second];
    }
  }
  const double u = 1.0 / static_cast<double>(sols.size());
  const double n = static_cast<double>(std::max<std::size_t>(runs, 1));
  double l1 = static_cast<double>(out.outside_support) / n;
  for (std::uint64_t c : hist) l1 += std::abs(static_cast<double>(c) / n - u);
  out.tv = 0.5 * l1;
  out.half_width = 0.5 * static_cast<double>(sols.size()) * 1.96 * std::sqrt(u * (1.0 - u) / n);
  return out;
}

struct ChainUniformityCell {
  std::vector<Var> vars;
  std::string values;  // one '0'/'1' per entry of vars
  double estimate = 0.0;
  double bound = 0.0;
  double sigma = 0.0;
  bool violated = false;
};

struct ChainUniformityReport {
  double s = 0.0;
  std::size_t runs = 0;
  std::size_t t = 0;
  std::vector<ChainUniformityCell> cells;
  std::size_t violations = 0;
  /// Largest estimate / bound over all cells.
  double worst_ratio = 0.0;
};

/// Monte Carlo check that X_t(M) is s-locally uniform: for every marked
/// variable and `pairs` random marked pairs, each cell probability is
/// compared with 2^{-|U|} e^{|U|/s}. A cell is flagged only when its estimate
/// exceeds the bound by more than three binomial standard deviations.
inline ChainUniformityReport check_chain_uniformity(const Formula& f, const Marking& m, const SamplerConfig& cfg,
                                                    std::size_t runs, double s, std::size_t pairs = 20) {
  ChainUniformityReport rep;
  rep.s = s;
  rep.runs = runs;
  BlockDynamics chain(f, m, cfg);
  rep.t = chain.t_max();
  std::vector<std::uint64_t> states;  // marked bits per run
  states.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    Rng rng(mix_seed(cfg.seed, r));
    const PartialAssignment x = chain.run_marked(rng);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < m.vars.size() && i < 64; ++i)
      if (x.value(m.vars[i])) bits |= std::uint64_t{1} << i;
    states.push_back(bits);
  }
  const std::size_t nm = std::min<std::size_t>(m.vars.size(), 64);
  std::vector<std::vector<std::size_t>> subsets;
  for (std::size_t i = 0; i < nm; ++i) subsets.push_back({i});
  Rng pick(mix_seed(cfg.seed, runs + 1));
  for (std::size_t p = 0; nm >= 2 && p < pairs; ++p) {
    const std::size_t a = pick.below(nm);
    std::size_t b = pick.below(nm - 1);
    if (b >= a) ++b;
    subsets.push_back({std::min(a, b), std::max(a, b)});
  }
  const double n = static_cast<double>(std::max<std::size_t>(runs, 1));
  for (const auto& u : subsets) {
    const double bound = std::exp(static_cast<double>(u.size()) / s) / static_cast<double>(std::size_t{1} << u.size());
    const double sigma = std::sqrt(std::min(bound, 1.0) * (1.0 - std::min(bound, 1.0)) / n);
    for (std::size_t tau = 0; tau < (std::size_t{1} << u.size()); ++tau) {
      std::size_t hits = 0;
      for (std::uint64_t st : states) {
        bool match = true;
        for (std::size_t j = 0; j < u.size(); ++j)
          if (((st >> u[j]) & 1) != ((tau >> j) & 1)) match = false;
        hits += match;
      }
      ChainUniformityCell cell;
      for (std::size_t j = 0; j < u.size(); ++j) {
        cell.vars.push_back(m.vars[u[j]]);
        cell.values.push_back(((tau >> j) & 1) ? '1' : '0');
      }
      cell.estimate = static_cast<double>(hits) / n;
      cell.bound = bound;
      cell.sigma = sigma;
      cell.violated = cell.estimate > bound + 3.0 * sigma;
      rep.violations += cell.violated;
      rep.worst_ratio = std::max(rep.worst_ratio, cell.estimate / bound);
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

}  // namespace marksat
