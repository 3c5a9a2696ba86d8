// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "marksat/errors.hpp"
#include "marksat/rng.hpp"

namespace marksat {

/// Variables are numbered 1..n as in DIMACS.
using Var = std::uint32_t;
/// Clause ids are 0-based positions in the clause list.
using ClauseId = std::uint32_t;

struct Literal {
  Var var = 0;
  bool positive = true;

  /// Truth value of the literal when its variable takes `value`.
  bool satisfied_by(bool value) const { return value == positive; }
  int dimacs() const { return positive ? static_cast<int>(var) : -static_cast<int>(var); }
  static Literal from_dimacs(long lit) {
    return Literal{static_cast<Var>(lit < 0 ? -lit : lit), lit > 0};
  }
  friend bool operator==(const Literal&, const Literal&) = default;
  friend auto operator<=>(const Literal&, const Literal&) = default;
};

using Clause = std::vector<Literal>;

struct Occurrence {
  ClauseId clause;
  std::uint32_t position;
};

/// Immutable CNF with a per-variable occurrence index.
class Formula {
 public:
  Formula() : occ_(1) {}
  explicit Formula(std::size_t n) : n_(n), occ_(n + 1) {}

  /// Validates the clauses: every variable in [1, n], no variable twice in a
  /// clause, and no empty clause unless `allow_empty_clauses`.
  Formula(std::size_t n, std::vector<Clause> clauses, bool allow_empty_clauses = false)
      : n_(n), clauses_(std::move(clauses)), occ_(n + 1) {
    std::vector<ClauseId> seen(n + 1, static_cast<ClauseId>(-1));
    for (ClauseId c = 0; c < clauses_.size(); ++c) {
      const Clause& clause = clauses_[c];
      if (clause.empty() && !allow_empty_clauses)
        throw InvalidArgument("clause " + std::to_string(c) + " is empty");
      for (std::uint32_t pos = 0; pos < clause.size(); ++pos) {
        const Var v = clause[pos].var;
        if (v < 1 || v > n)
          throw InvalidArgument("literal " + std::to_string(clause[pos].dimacs()) +
                                " out of range in clause " + std::to_string(c));
        if (seen[v] == c)
          throw InvalidArgument("duplicate variable " + std::to_string(v) + " in clause " +
                                std::to_string(c));
        seen[v] = c;
        occ_[v].push_back(Occurrence{c, pos});
      }
    }
  }

  std::size_t num_vars() const { return n_; }
  std::size_t num_clauses() const { return clauses_.size(); }
  const std::vector<Clause>& clauses() const { return clauses_; }
  const Clause& clause(ClauseId c) const { return clauses_[c]; }

  std::span<const Occurrence> occurrences(Var v) const { return occ_[v]; }
  /// Number of literal occurrences of v (multiplicity counted).
  std::size_t degree(Var v) const { return occ_[v].size(); }

  std::size_t max_degree() const {
    std::size_t d = 0;
    for (Var v = 1; v <= n_; ++v) d = std::max(d, occ_[v].size());
    return d;
  }
  std::size_t max_width() const {
    std::size_t w = 0;
    for (const auto& c : clauses_) w = std::max(w, c.size());
    return w;
  }
  std::size_t min_width() const {
    if (clauses_.empty()) return 0;
    std::size_t w = clauses_.front().size();
    for (const auto& c : clauses_) w = std::min(w, c.size());
    return w;
  }

  friend bool operator==(const Formula& a, const Formula& b) {
    return a.n_ == b.n_ && a.clauses_ == b.clauses_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Clause> clauses_;
  std::vector<std::vector<Occurrence>> occ_;
};

/// Total assignment over variables 1..n.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}

  /// Parses one character per variable over {0,1}; variable i at position i-1.
  static Assignment from_string(std::string_view text) {
    Assignment a(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] != '0' && text[i] != '1')
        throw ParseError("assignment character '" + std::string(1, text[i]) +
                         "' at position " + std::to_string(i) + " is not 0/1");
      a.bits_[i] = text[i] == '1';
    }
    return a;
  }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  std::size_t size() const { return bits_.size(); }
  bool operator[](Var v) const { return bits_[v - 1] != 0; }
  void set(Var v, bool value) { bits_[v - 1] = value ? 1 : 0; }
  void flip(Var v) { bits_[v - 1] ^= 1; }

  friend bool operator==(const Assignment&, const Assignment&) = default;
  friend auto operator<=>(const Assignment&, const Assignment&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Assignment to a subset of variables. Unassigned entries hold no value.
class PartialAssignment {
 public:
  PartialAssignment() : vals_(1, kUnset) {}
  explicit PartialAssignment(std::size_t n) : vals_(n + 1, kUnset) {}

  /// Restriction of a total assignment to `vars`.
  static PartialAssignment restrict(const Assignment& a, std::span<const Var> vars) {
    PartialAssignment x(a.size());
    for (Var v : vars) x.assign(v, a[v]);
    return x;
  }
  static PartialAssignment from(const Assignment& a) {
    PartialAssignment x(a.size());
    for (Var v = 1; v <= a.size(); ++v) x.assign(v, a[v]);
    return x;
  }

  std::size_t num_vars() const { return vals_.size() - 1; }
  bool contains(Var v) const { return vals_[v] != kUnset; }
  bool value(Var v) const { return vals_[v] == 1; }
  void assign(Var v, bool value) { vals_[v] = value ? 1 : 0; }
  void erase(Var v) { vals_[v] = kUnset; }

  std::vector<Var> domain() const {
    std::vector<Var> d;
    for (Var v = 1; v < vals_.size(); ++v)
      if (contains(v)) d.push_back(v);
    return d;
  }
  std::size_t size() const {
    return static_cast<std::size_t>(std::count_if(vals_.begin() + 1, vals_.end(),
                                                  [](std::int8_t x) { return x != kUnset; }));
  }

  /// One character per variable: '0', '1', or '*' when unassigned.
  std::string to_string() const {
    std::string s(num_vars(), '*');
    for (Var v = 1; v < vals_.size(); ++v)
      if (contains(v)) s[v - 1] = value(v) ? '1' : '0';
    return s;
  }

  /// Copies every assigned value of `other` into this assignment.
  void merge(const PartialAssignment& other) {
    for (Var v = 1; v < other.vals_.size(); ++v)
      if (other.contains(v)) assign(v, other.value(v));
  }

  /// Converts to a total assignment; fails if some variable is unassigned.
  Assignment to_total() const {
    Assignment a(num_vars());
    for (Var v = 1; v < vals_.size(); ++v) {
      if (!contains(v))
        throw InvalidArgument("variable " + std::to_string(v) + " is unassigned");
      a.set(v, value(v));
    }
    return a;
  }

  friend bool operator==(const PartialAssignment&, const PartialAssignment&) = default;

 private:
  static constexpr std::int8_t kUnset = -1;
  std::vector<std::int8_t> vals_;
};

// ---------------------------------------------------------------------------
// DIMACS

/// Parses DIMACS CNF. Comment lines start with 'c'; a '%' line ends input.
inline Formula parse_dimacs(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  long n = -1, m = -1;
  std::vector<Clause> clauses;
  Clause current;
  std::vector<long> seen_in_clause;
  bool done = false;
  std::size_t lineno = 0;
  while (!done && std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const char lead = line[first];
    if (lead == 'c') continue;
    if (lead == '%') break;
    if (lead == 'p') {
      if (n >= 0) throw ParseError("duplicate header at line " + std::to_string(lineno));
      std::istringstream hs(line.substr(first));
      std::string p, fmt, extra;
      if (!(hs >> p >> fmt >> n >> m) || p != "p" || fmt != "cnf" || n < 0 || m < 0 ||
          (hs >> extra))
        throw ParseError("malformed header at line " + std::to_string(lineno));
      continue;
    }
    if (n < 0) throw ParseError("clause before header at line " + std::to_string(lineno));
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const long lit = std::strtol(tok.c_str(), &end, 10);
      if (*end != '\0') throw ParseError("bad token '" + tok + "' at line " + std::to_string(lineno));
      if (lit == 0) {
        clauses.push_back(std::move(current));
        current.clear();
        continue;
      }
      const long v = lit < 0 ? -lit : lit;
      if (v > n)
        throw ParseError("literal " + std::to_string(lit) + " out of range at line " +
                         std::to_string(lineno));
      for (const Literal& l : current)
        if (l.var == static_cast<Var>(v))
          throw ParseError("duplicate variable " + std::to_string(v) + " in clause at line " +
                           std::to_string(lineno));
      current.push_back(Literal::from_dimacs(lit));
    }
  }
  if (n < 0) throw ParseError("missing header");
  if (!current.empty()) throw ParseError("last clause is not terminated by 0");
  if (static_cast<long>(clauses.size()) != m)
    throw ParseError("header declares " + std::to_string(m) + " clauses, found " +
                     std::to_string(clauses.size()));
  return Formula(static_cast<std::size_t>(n), std::move(clauses), /*allow_empty_clauses=*/true);
}

/// Canonical DIMACS: header line, then one clause per line in stored order.
inline std::string emit_dimacs(const Formula& f) {
  std::string out = "p cnf " + std::to_string(f.num_vars()) + " " +
                    std::to_string(f.num_clauses()) + "\n";
  for (const Clause& c : f.clauses()) {
    for (const Literal& l : c) {
      out += std::to_string(l.dimacs());
      out += ' ';
    }
    out += "0\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances

/// m independent clauses, each over k distinct uniformly chosen variables with
/// uniform polarities. Literals are stored sorted by variable.
inline Formula generate_random_kcnf(std::size_t n, std::size_t m, std::size_t k,
                                    std::uint64_t seed) {
  if (k > n) throw InvalidArgument("clause width k exceeds variable count n");
  if (k == 0 && m > 0) throw InvalidArgument("clause width must be positive");
  Rng rng(seed);
  std::vector<Var> pool(n);
  std::iota(pool.begin(), pool.end(), Var{1});
  std::vector<Clause> clauses;
  clauses.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(n - j));
      std::swap(pool[j], pool[pick]);
    }
    Clause c;
    c.reserve(k);
    for (std::size_t j = 0; j < k; ++j) c.push_back(Literal{pool[j], rng.bit()});
    std::sort(c.begin(), c.end(), [](const Literal& a, const Literal& b) { return a.var < b.var; });
    clauses.push_back(std::move(c));
  }
  return Formula(n, std::move(clauses));
}

// ---------------------------------------------------------------------------
// Evaluation

inline bool clause_satisfied(const Clause& c, const Assignment& a) {
  return std::any_of(c.begin(), c.end(), [&](const Literal& l) { return l.satisfied_by(a[l.var]); });
}

inline bool is_satisfying(const Formula& f, const Assignment& a) {
  if (a.size() != f.num_vars()) return false;
  return std::all_of(f.clauses().begin(), f.clauses().end(),
                     [&](const Clause& c) { return clause_satisfied(c, a); });
}

inline std::size_t hamming(const Assignment& a, const Assignment& b) {
  if (a.size() != b.size()) throw InvalidArgument("hamming: assignments differ in length");
  std::size_t d = 0;
  for (Var v = 1; v <= a.size(); ++v) d += a[v] != b[v];
  return d;
}

// ---------------------------------------------------------------------------
// Simplification

struct SimplifyOutcome {
  enum class Status { kOk, kFalsified };

  Formula formula;
  Status status = Status::kOk;
  /// Clause of the input formula falsified by the pinning (status kFalsified).
  std::optional<ClauseId> falsified_clause;
  /// origin[i] is the id, in the input formula, of output clause i.
  std::vector<ClauseId> origin;

  bool ok() const { return status == Status::kOk; }
};

/// Formula under a partial assignment: satisfied clauses removed, assigned
/// literals deleted from the rest. The variable index space is unchanged.
inline SimplifyOutcome simplify(const Formula& f, const PartialAssignment& x) {
  if (x.num_vars() < f.num_vars())
    throw InvalidArgument("simplify: pinning shorter than the formula");
  SimplifyOutcome out;
  std::vector<Clause> kept;
  for (ClauseId c = 0; c < f.num_clauses(); ++c) {
    Clause residual;
    bool satisfied = false;
    for (const Literal& l : f.clause(c)) {
      if (!x.contains(l.var)) {
        residual.push_back(l);
      } else if (l.satisfied_by(x.value(l.var))) {
        satisfied = true;
        break;
      }
    }
    if (satisfied) continue;
    if (residual.empty()) {
      out.status = SimplifyOutcome::Status::kFalsified;
      out.falsified_clause = c;
      out.formula = Formula(f.num_vars());
      out.origin.clear();
      return out;
    }
    kept.push_back(std::move(residual));
    out.origin.push_back(c);
  }
  out.formula = Formula(f.num_vars(), std::move(kept));
  return out;
}

// ---------------------------------------------------------------------------
// Hypergraph views

struct VarComponent {
  std::vector<Var> vars;          // ascending
  std::vector<ClauseId> clauses;  // ascending
};

/// Connected component of v in the dependency hypergraph (variables adjacent
/// when they share a clause). An isolated variable yields ({v}, {}).
inline VarComponent connected_component(const Formula& f, Var v) {
  VarComponent out;
  if (v < 1 || v > f.num_vars()) throw InvalidArgument("variable out of range");
  std::vector<char> var_seen(f.num_vars() + 1, 0), clause_seen(f.num_clauses(), 0);
  std::vector<Var> stack{v};
  var_seen[v] = 1;
  while (!stack.empty()) {
    const Var u = stack.back();
    stack.pop_back();
    out.vars.push_back(u);
    for (const Occurrence& o : f.occurrences(u)) {
      if (clause_seen[o.clause]) continue;
      clause_seen[o.clause] = 1;
      out.clauses.push_back(o.clause);
      for (const Literal& l : f.clause(o.clause))
        if (!var_seen[l.var]) {
          var_seen[l.var] = 1;
          stack.push_back(l.var);
        }
    }
  }
  std::sort(out.vars.begin(), out.vars.end());
  std::sort(out.clauses.begin(), out.clauses.end());
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force enumeration

inline constexpr std::size_t kDefaultEnumerationCap = 26;

/// Every satisfying assignment, in lexicographic order of the bitstring
/// (variable 1 most significant). Exhaustive over 2^n assignments.
inline std::vector<Assignment> enumerate_solutions(const Formula& f,
                                                   std::size_t cap = kDefaultEnumerationCap) {
  const std::size_t n = f.num_vars();
  if (n > cap || n > 62)
    throw CapExceeded("enumeration cap exceeded: n = " + std::to_string(n), n);
  // Bit (n - v) of the counter holds variable v.
  struct Masks {
    std::uint64_t pos = 0, neg = 0;
  };
  std::vector<Masks> masks;
  masks.reserve(f.num_clauses());
  for (const Clause& c : f.clauses()) {
    Masks mk;
    for (const Literal& l : c) (l.positive ? mk.pos : mk.neg) |= std::uint64_t{1} << (n - l.var);
    masks.push_back(mk);
  }
  std::vector<Assignment> out;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t a = 0; a < total; ++a) {
    bool ok = true;
    for (const Masks& mk : masks)
      if (((a & mk.pos) | (~a & mk.neg)) == 0) {
        ok = false;
        break;
      }
    if (!ok) continue;
    Assignment s(n);
    for (Var v = 1; v <= n; ++v) s.set(v, (a >> (n - v)) & 1);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace marksat
