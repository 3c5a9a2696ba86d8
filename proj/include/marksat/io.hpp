// SPDX-License-Identifier: Apache-2.0
// JSON views of library results. Requires nlohmann/json; the rest of the
// library does not.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "marksat/classifier.hpp"
#include "marksat/coupling.hpp"
#include "marksat/geometry.hpp"
#include "marksat/marking.hpp"
#include "marksat/paths.hpp"
#include "marksat/sampler.hpp"

namespace marksat::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json tagged(std::string_view kind) {
  return json{{"schema", std::string("marksat/") + std::string(kind)}, {"version", kSchemaVersion}};
}

/// Partial assignment text: one of '0', '1', '*' per variable.
inline PartialAssignment parse_partial(std::string_view text) {
  PartialAssignment x(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '*') continue;
    if (c != '0' && c != '1')
      throw ParseError("pinning character '" + std::string(1, c) + "' at position " + std::to_string(i) +
                       " is not 0/1/*");
    x.assign(static_cast<Var>(i + 1), c == '1');
  }
  return x;
}

inline json to_json(const Classification& cl) {
  json j = tagged("classification");
  std::vector<std::size_t> sizes;
  for (const auto& c : cl.bad_components) sizes.push_back(c.size());
  j["delta"] = cl.delta;
  j["zeta"] = cl.zeta;
  j["k"] = cl.k;
  j["threshold"] = cl.threshold;
  j["iterations"] = cl.iterations;
  j["n_bad_vars"] = cl.v_bad.size();
  j["n_bad_clauses"] = cl.c_bad.size();
  j["bad_vars"] = cl.v_bad;
  j["component_sizes"] = sizes;
  j["max_component"] = cl.max_component();
  return j;
}

inline json to_json(const Marking& m, std::span<const ClauseId> violations = {}) {
  json j = tagged("marking");
  j["vars"] = m.vars;
  j["k_m"] = m.k_m;
  j["k_u"] = m.k_u;
  j["certified"] = m.certified;
  j["resamples"] = m.resamples;
  j["violations"] = std::vector<ClauseId>(violations.begin(), violations.end());
  return j;
}

/// Reads the "vars" list of a marking document.
inline Marking marking_from_json(const json& j, std::size_t n) {
  if (!j.is_object() || !j.contains("vars") || !j["vars"].is_array())
    throw ParseError("marking document needs a \"vars\" array");
  std::vector<Var> vars;
  for (const auto& v : j["vars"]) {
    if (!v.is_number_unsigned()) throw ParseError("marking variables must be positive integers");
    vars.push_back(v.get<Var>());
  }
  return Marking::from_vars(n, vars, j.value("k_m", std::size_t{0}), j.value("k_u", std::size_t{0}),
                            j.value("certified", false));
}

inline json sample_line(const ChainResult& r) {
  return json{{"assignment", r.assignment.to_string()},
              {"steps", r.trace.steps},
              {"max_component", r.trace.max_component},
              {"rejects", r.trace.rejects}};
}

inline json to_json(const SolutionPath& p) {
  json j = tagged("path");
  std::vector<std::string> entries, stages;
  for (const auto& a : p.entries) entries.push_back(a.to_string());
  for (PathStage s : p.stages) stages.push_back(to_string(s));
  j["entries"] = entries;
  j["distances"] = p.distances;
  j["stages"] = stages;
  j["max_step"] = p.max_step();
  j["max_component"] = p.max_component;
  return j;
}

inline json to_json(const LoosenessReport& r) {
  json j = tagged("looseness");
  json vars = json::array();
  for (const auto& w : r.vars) {
    json e{{"var", w.var}, {"ok", w.ok}, {"distance", w.distance}, {"component_vars", w.component_vars}};
    if (w.witness) e["witness"] = w.witness->to_string();
    vars.push_back(std::move(e));
  }
  j["vars"] = std::move(vars);
  j["failures"] = r.failures;
  j["max_distance"] = r.max_distance;
  j["all_loose"] = r.all_loose();
  return j;
}

inline json to_json(const LoosenessAggregate& a) {
  json j = tagged("looseness-aggregate");
  j["samples"] = a.samples;
  j["all_loose"] = a.all_loose;
  j["failure_counts"] = a.failure_counts;
  j["total_failures"] = a.total_failures;
  j["max_distance"] = a.max_distance;
  return j;
}

inline json to_json(const SolutionGraphSummary& s) {
  json j = tagged("solution-graph");
  j["D"] = s.d;
  j["num_solutions"] = s.num_solutions;
  j["num_components"] = s.sizes.size();
  j["sizes"] = s.sizes;
  j["giant_fraction"] = s.giant_fraction;
  j["method"] = s.method;
  return j;
}

inline json to_json(const FlippabilityResult& r) {
  json j = tagged("flippability");
  j["all_flippable"] = r.all_flippable;
  j["unflippable"] = r.unflippable;
  j["method"] = r.method;
  j["nae_pair"] = r.nae_pair ? json::array({r.nae_pair->first.to_string(), r.nae_pair->second.to_string()})
                             : json(nullptr);
  return j;
}

inline json to_json(const InfluenceMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"vars", m.vars}, {"matrix", std::move(rows)}, {"infeasible", m.infeasible},
              {"max_eigenvalue", m.max_eigenvalue}};
}

inline json to_json(const RateEstimate& r) { return json{{"mean", r.mean}, {"sigma", r.sigma}}; }

inline json to_json(const CouplingEstimate& e) {
  json rates = json::array();
  for (std::size_t i = 0; i < e.vars.size(); ++i)
    rates.push_back(json{{"var", e.vars[i]}, {"mean", e.rates[i].mean}, {"sigma", e.rates[i].sigma}});
  return json{{"trials", e.trials},
              {"v0", e.v0},
              {"rates", std::move(rates)},
              {"total", to_json(e.total)},
              {"failed_clauses", to_json(e.failed_clauses)},
              {"diagnostic_failures", e.diagnostic_failures}};
}

inline json error_json(std::string_view kind, std::string_view message) {
  json j = tagged("error");
  j["error"] = std::string(kind);
  j["message"] = std::string(message);
  return j;
}

}  // namespace marksat::io
