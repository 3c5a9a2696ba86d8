// SPDX-License-Identifier: Apache-2.0
// Command-line front end. dispatch() is the whole program; main() only
// forwards argv, so tests drive it directly.
#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "marksat/io.hpp"
#include "marksat/marksat.hpp"

namespace marksat::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// Usage problems: bad flags, unreadable or malformed input files.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t cap = kDefaultEnumerationCap;
  std::size_t k = 0;  // 0: widest clause of the input
  std::optional<double> alpha;
  double zeta = 0.1;
  std::optional<std::size_t> delta;
  std::optional<std::size_t> k_m, k_u;
  std::optional<double> p_mark;
  std::size_t max_resamples = 10000;
  std::uint64_t max_nodes = Limits{}.max_nodes;
  std::string format = "json";
  std::size_t jobs = 1;
  std::string out;
  std::string config_out;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

inline Formula load_formula(const std::string& path) {
  try {
    return parse_dimacs(read_file(path));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

inline Assignment load_assignment(const std::string& path, std::size_t n) {
  Assignment a;
  try {
    a = Assignment::from_string(trim(read_file(path)));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (a.size() != n)
    throw UsageError(path + ": expected " + std::to_string(n) + " values, found " + std::to_string(a.size()));
  return a;
}

inline PartialAssignment load_partial(const std::string& path, std::size_t n) {
  PartialAssignment x;
  try {
    x = io::parse_partial(trim(read_file(path)));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (x.num_vars() != n)
    throw UsageError(path + ": expected " + std::to_string(n) + " values, found " + std::to_string(x.num_vars()));
  return x;
}

inline std::size_t width(const GlobalOptions& g, const Formula& f) { return g.k ? g.k : f.max_width(); }

inline Limits limits(const GlobalOptions& g) { return Limits{.max_nodes = g.max_nodes}; }

inline Classification classification(const GlobalOptions& g, const Formula& f) {
  const std::size_t k = width(g, f);
  const double alpha =
      g.alpha.value_or(f.num_vars() ? static_cast<double>(f.num_clauses()) / static_cast<double>(f.num_vars()) : 0.0);
  return classify(f, g.delta.value_or(default_delta(k, alpha)), g.zeta, k);
}

inline MarkingOptions marking_options(const GlobalOptions& g, const Formula& f, std::uint64_t seed) {
  const auto [km, ku] = default_quotas(width(g, f), g.zeta);
  MarkingOptions o;
  o.k_m = g.k_m.value_or(km);
  o.k_u = g.k_u.value_or(ku);
  o.p_mark = g.p_mark;
  o.seed = seed;
  o.max_resamples = g.max_resamples;
  return o;
}

/// The marking from --marking when given, otherwise a fresh search seeded
/// from the run seed.
inline Marking obtain_marking(const GlobalOptions& g, const Formula& f, const std::string& path,
                              const std::vector<Var>* candidates = nullptr) {
  if (!path.empty()) {
    try {
      return io::marking_from_json(json::parse(read_file(path)), f.num_vars());
    } catch (const json::exception& e) {
      throw UsageError(path + ": " + e.what());
    } catch (const ParseError& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
  MarkingOptions o = marking_options(g, f, mix_seed(g.seed, 0x6d61726bULL));
  if (candidates) o.candidates = *candidates;
  return find_marking(f, o);
}

inline void summarize(const json& j, std::ostream& os, const std::string& prefix = "") {
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      summarize(value, os, prefix + key + ".");
    } else {
      std::string text = value.dump();
      if (text.size() > 100) text = text.substr(0, 97) + "...";
      os << prefix << key << ": " << text << '\n';
    }
  }
}

class Output {
 public:
  Output(const GlobalOptions& g, std::ostream& stdout_stream) : format_(g.format) {
    if (!g.out.empty()) {
      file_.open(g.out, std::ios::binary | std::ios::trunc);
      if (!file_) throw UsageError("cannot write " + g.out);
      os_ = &file_;
    } else {
      os_ = &stdout_stream;
    }
  }
  void document(const json& j) {
    if (format_ == "summary") {
      summarize(j, *os_);
    } else {
      *os_ << j.dump(2) << '\n';
    }
  }
  void line(const json& j) { *os_ << j.dump() << '\n'; }
  std::ostream& raw() { return *os_; }

 private:
  std::string format_;
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

}  // namespace detail

/// Runs one pipeline cell: generate, classify, mark, then sample, walk a
/// path between two samples and certify looseness of the first.
inline json pipeline_record(const GlobalOptions& g, const json& inst, std::uint64_t seed, const json& spec) {
  json rec{{"instance", inst}, {"seed", seed}};
  try {
    const std::size_t n = inst.at("n").get<std::size_t>();
    const std::size_t k = inst.at("k").get<std::size_t>();
    const std::size_t m = inst.contains("m") ? inst.at("m").get<std::size_t>()
                                             : static_cast<std::size_t>(std::lround(inst.at("alpha").get<double>() *
                                                                                    static_cast<double>(n)));
    const Formula f = generate_random_kcnf(n, m, k, seed);
    GlobalOptions local = g;
    local.seed = seed;
    local.k = k;
    local.alpha = static_cast<double>(m) / static_cast<double>(n);
    if (inst.contains("delta")) local.delta = inst.at("delta").get<std::size_t>();
    if (inst.contains("zeta")) local.zeta = inst.at("zeta").get<double>();
    if (inst.contains("k_m")) local.k_m = inst.at("k_m").get<std::size_t>();
    if (inst.contains("k_u")) local.k_u = inst.at("k_u").get<std::size_t>();
    const Classification cl = detail::classification(local, f);
    rec["classification"] = io::to_json(cl);
    const Marking mk = detail::obtain_marking(local, f, "");
    rec["marking"] = io::to_json(mk, verify_marking(f, mk));

    SamplerConfig cfg;
    cfg.theta = spec.value("theta", 0.3);
    if (spec.contains("t_max")) cfg.t_max = spec.at("t_max").get<std::size_t>();
    cfg.limits = detail::limits(local);
    cfg.seed = mix_seed(seed, 1);
    const ChainResult a = run_block_dynamics(f, mk, cfg);
    cfg.seed = mix_seed(seed, 2);
    const ChainResult b = run_block_dynamics(f, mk, cfg);
    rec["sample"] = io::sample_line(a);
    const SolutionPath p = find_path_bounded(f, mk, a.assignment, b.assignment, cfg.limits);
    rec["path"] = json{{"steps", p.distances.size()}, {"max_step", p.max_step()}, {"max_component", p.max_component}};
    const LoosenessReport lr = looseness_report(f, mk, &cl, a.assignment, cfg.limits);
    rec["loose"] = json{{"failures", lr.failures}, {"max_distance", lr.max_distance}};
  } catch (const Error& e) {
    rec["error"] = io::error_json(to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    rec["error"] = io::error_json("invalid-spec", e.what());
  }
  return rec;
}

inline json run_pipeline(const GlobalOptions& g, const json& spec) {
  if (!spec.is_object()) throw UsageError("pipeline spec must be a JSON object");
  const json instances = spec.value("instances", json::array());
  const json seeds = spec.value("seeds", json::array());
  if (!instances.is_array() || !seeds.is_array()) throw UsageError("instances and seeds must be arrays");
  std::vector<std::pair<json, std::uint64_t>> cells;
  for (const auto& inst : instances)
    for (const auto& s : seeds) {
      if (!s.is_number_unsigned()) throw UsageError("seeds must be non-negative integers");
      cells.emplace_back(inst, s.get<std::uint64_t>());
    }
  std::vector<json> out(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();)
      out[i] = pipeline_record(g, cells[i].first, cells[i].second, spec);
  };
  const std::size_t jobs = std::clamp<std::size_t>(g.jobs, 1, std::max<std::size_t>(cells.size(), 1));
  std::vector<std::jthread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  pool.clear();
  return json(out);
}

/// Parses argv and runs one subcommand. Returns 0 on success, 1 on a domain
/// error (infeasible, cap or regime) and 2 on a usage error; errors are
/// reported as JSON objects on `err`.
inline int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Marked-variable sampling, solution paths and looseness for k-CNF formulas", "marksat"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--cap", g.cap, "Largest variable count enumerated exhaustively");
  app.add_option("--k", g.k, "Nominal clause width (default: widest clause)");
  app.add_option("--alpha", g.alpha, "Clause density (default: m / n of the input)");
  app.add_option("--zeta", g.zeta, "Bad-clause fraction, in (0, 1/2)");
  app.add_option("--delta", g.delta, "High-degree threshold (default: ceil(k^4 alpha))");
  app.add_option("--km", g.k_m, "Marked-variable quota per clause");
  app.add_option("--ku", g.k_u, "Unmarked-variable quota per clause");
  app.add_option("--pmark", g.p_mark, "Marking probability");
  app.add_option("--max-resamples", g.max_resamples, "Resampling budget of the marking search");
  app.add_option("--max-nodes", g.max_nodes, "Search-node budget per counting call");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "summary"}));
  app.add_option("--jobs", g.jobs, "Parallel pipeline cells")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file (default: stdout)");
  app.add_option("--config-out", g.config_out, "Write the run configuration to this file");

  std::string dimacs, sigma_path, sigma2_path, assignment_path, marking_path, pin_path, mode = "bounded",
                                                                                        spec_path, config_path;
  std::size_t n = 0, runs = 1, trials = 1000, samples = 1, big_d = 0;
  std::optional<std::size_t> m_clauses, t_max, k_c;
  std::optional<double> s_window;
  double theta = 0.3;
  Var v0 = 0;
  bool good_only = false;

  auto need_dimacs = [&](CLI::App* sub) { sub->add_option("--dimacs", dimacs, "DIMACS CNF file")->required(); };

  CLI::App* gen = app.add_subcommand("gen", "Generate a random k-CNF in DIMACS form");
  gen->add_option("--n", n, "Variables")->required();
  gen->add_option("--m", m_clauses, "Clauses (default: round(alpha n))");

  CLI::App* cls = app.add_subcommand("classify", "Classify variables and clauses as good or bad");
  need_dimacs(cls);

  CLI::App* mark = app.add_subcommand("mark", "Search for a marking meeting the per-clause quotas");
  need_dimacs(mark);
  mark->add_flag("--good-only", good_only, "Mark good variables only, checking good clauses");

  CLI::App* sample = app.add_subcommand("sample", "Draw solutions with marked block dynamics (JSON Lines)");
  need_dimacs(sample);
  sample->add_option("--theta", theta, "Block fraction")->check(CLI::Range(0.0, 1.0));
  sample->add_option("--tmax", t_max, "Block updates per run");
  sample->add_option("--runs", runs, "Independent runs");
  sample->add_option("--marking", marking_path, "Marking JSON (default: search)");

  CLI::App* path = app.add_subcommand("path", "Build a short-step path between two solutions");
  need_dimacs(path);
  path->add_option("--mode", mode, "bounded or random")->check(CLI::IsMember({"bounded", "random"}));
  path->add_option("--sigma", sigma_path, "Start assignment file")->required();
  path->add_option("--sigma2", sigma2_path, "End assignment file")->required();
  path->add_option("--marking", marking_path, "Marking JSON (default: search)");

  CLI::App* loose = app.add_subcommand("loose", "Certify that every variable can be flipped locally");
  need_dimacs(loose);
  loose->add_option("--sigma", sigma_path, "Solution file (default: sample --samples solutions)");
  loose->add_option("--samples", samples, "Sampled solutions when --sigma is absent");
  loose->add_option("--marking", marking_path, "Marking JSON (default: search)");

  CLI::App* solgraph = app.add_subcommand("solgraph", "Components of the distance-D solution graph");
  need_dimacs(solgraph);
  solgraph->add_option("--D", big_d, "Largest Hamming distance of an edge")->required();

  CLI::App* influence = app.add_subcommand("influence", "Exact influence matrix and coupling estimates");
  need_dimacs(influence);
  influence->add_option("--pin", pin_path, "Pinning file over 0/1/*")->required();
  influence->add_option("--v0", v0, "Marked start variable")->required();
  influence->add_option("--trials", trials, "Coupling runs");
  influence->add_option("--kc", k_c, "Cutoff (default from k_u and zeta)");
  influence->add_option("--s", s_window, "Check the 1/s marginal window during the coupling");
  influence->add_option("--marking", marking_path, "Marking JSON (default: search over good variables)");

  CLI::App* flip = app.add_subcommand("flippable", "Whether every variable takes both values");
  need_dimacs(flip);

  CLI::App* verify = app.add_subcommand("verify", "Check an assignment against a formula");
  need_dimacs(verify);
  verify->add_option("--assignment", assignment_path, "Assignment file")->required();

  CLI::App* pipeline = app.add_subcommand("pipeline", "Run gen, classify, mark, sample, path and loose over a sweep");
  pipeline->add_option("--spec", spec_path, "Sweep specification (JSON)")->required();

  CLI::App* replay = app.add_subcommand("replay", "Re-run a serialized run configuration");
  replay->add_option("--config", config_path, "Run configuration file")->required();

  auto fail = [&](int code, std::string_view kind, std::string_view message) {
    err << io::error_json(kind, message).dump() << '\n';
    return code;
  };

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    if (replay->parsed()) {
      json cfg;
      try {
        cfg = json::parse(detail::read_file(config_path));
      } catch (const json::exception& e) {
        throw UsageError(config_path + ": " + e.what());
      }
      if (!cfg.contains("argv") || !cfg["argv"].is_array()) throw UsageError("configuration has no argv");
      std::vector<std::string> again{"marksat"};
      for (const auto& a : cfg["argv"]) again.push_back(a.get<std::string>());
      if (again.size() > 1 && again[1] == "replay") throw UsageError("refusing to replay a replay");
      return dispatch(again, out, err);
    }

    const CLI::App* sub = app.get_subcommands().front();
    json run_config{{"subcommand", sub->get_name()},
                    {"argv", json(std::vector<std::string>(argv.begin() + (argv.empty() ? 0 : 1), argv.end()))},
                    {"seed", g.seed},
                    {"cap", g.cap},
                    {"version", kVersion}};
    if (!g.config_out.empty()) {
      std::ofstream cf(g.config_out, std::ios::binary | std::ios::trunc);
      if (!cf) throw UsageError("cannot write " + g.config_out);
      cf << run_config.dump(2) << '\n';
    }
    const Limits lim = detail::limits(g);
    detail::Output o(g, out);
    auto emit = [&](json j) {
      j["run_config"] = run_config;
      o.document(j);
    };

    if (gen->parsed()) {
      const std::size_t k = g.k ? g.k : 3;
      std::size_t m = 0;
      if (m_clauses) {
        m = *m_clauses;
      } else if (g.alpha) {
        m = static_cast<std::size_t>(std::lround(*g.alpha * static_cast<double>(n)));
      } else {
        throw UsageError("gen needs --m or --alpha");
      }
      o.raw() << emit_dimacs(generate_random_kcnf(n, m, k, g.seed));
      return 0;
    }

    if (pipeline->parsed()) {
      json spec;
      try {
        spec = json::parse(detail::read_file(spec_path));
      } catch (const json::exception& e) {
        throw UsageError(spec_path + ": " + e.what());
      }
      const json records = run_pipeline(g, spec);
      if (g.format == "summary") {
        for (const auto& r : records) o.raw() << r.dump() << '\n';
      } else {
        o.raw() << records.dump(2) << '\n';
      }
      return 0;
    }

    const Formula f = detail::load_formula(dimacs);

    if (verify->parsed()) {
      const Assignment a = detail::load_assignment(assignment_path, f.num_vars());
      std::vector<ClauseId> violated;
      for (ClauseId c = 0; c < f.num_clauses(); ++c)
        if (!clause_satisfied(f.clause(c), a)) violated.push_back(c);
      json j = io::tagged("verify");
      j["satisfied"] = violated.empty();
      j["violated"] = violated;
      emit(j);
      return violated.empty() ? 0 : 1;
    }

    if (cls->parsed()) {
      emit(io::to_json(detail::classification(g, f)));
      return 0;
    }

    if (mark->parsed()) {
      Marking mk;
      if (good_only) {
        const Classification cl = detail::classification(g, f);
        const InducedFormula good = good_induced_formula(f, cl, true);
        MarkingOptions opt = detail::marking_options(g, f, g.seed);
        opt.candidates = cl.v_good;
        mk = find_marking(good.formula, opt);
        emit(io::to_json(mk, verify_marking(good.formula, mk)));
      } else {
        mk = find_marking(f, detail::marking_options(g, f, g.seed));
        emit(io::to_json(mk, verify_marking(f, mk)));
      }
      return 0;
    }

    if (sample->parsed()) {
      const Marking mk = detail::obtain_marking(g, f, marking_path);
      SamplerConfig cfg;
      cfg.theta = theta;
      cfg.t_max = t_max;
      cfg.limits = lim;
      BlockDynamics chain(f, mk, cfg);
      for (std::size_t r = 0; r < runs; ++r) {
        Rng rng(mix_seed(g.seed, r));
        const ChainResult res = chain.run(rng);
        o.line(io::sample_line(res));
      }
      return 0;
    }

    if (path->parsed()) {
      const Assignment a = detail::load_assignment(sigma_path, f.num_vars());
      const Assignment b = detail::load_assignment(sigma2_path, f.num_vars());
      SolutionPath p;
      if (mode == "bounded") {
        p = find_path_bounded(f, detail::obtain_marking(g, f, marking_path), a, b, lim);
      } else {
        const Classification cl = detail::classification(g, f);
        Marking mk;
        if (marking_path.empty()) {
          const InducedFormula good = good_induced_formula(f, cl, true);
          MarkingOptions opt = detail::marking_options(g, f, mix_seed(g.seed, 0x6d61726bULL));
          opt.candidates = cl.v_good;
          mk = find_marking(good.formula, opt);
        } else {
          mk = detail::obtain_marking(g, f, marking_path);
        }
        p = find_path_random(f, cl, mk, a, b, g.seed, lim);
      }
      json j = io::to_json(p);
      j["mode"] = mode;
      emit(j);
      return 0;
    }

    if (loose->parsed()) {
      const Classification cl = detail::classification(g, f);
      const Marking mk = detail::obtain_marking(g, f, marking_path);
      std::vector<Assignment> sigmas;
      if (!sigma_path.empty()) {
        sigmas.push_back(detail::load_assignment(sigma_path, f.num_vars()));
      } else {
        Rng rng(g.seed);
        for (std::size_t i = 0; i < samples; ++i) sigmas.push_back(sample_solution(f, rng, lim));
      }
      json per = json::array();
      for (const Assignment& s : sigmas) {
        json r = io::to_json(looseness_report(f, mk, &cl, s, lim));
        r["sigma"] = s.to_string();
        per.push_back(std::move(r));
      }
      json j = io::tagged("loose");
      j["per_sigma"] = std::move(per);
      j["aggregate"] = io::to_json(aggregate_looseness(f, mk, &cl, sigmas, lim));
      emit(j);
      return 0;
    }

    if (solgraph->parsed()) {
      emit(io::to_json(solution_graph(f, big_d, g.cap)));
      return 0;
    }

    if (flip->parsed()) {
      emit(io::to_json(check_flippable_all(f, std::max<std::size_t>(g.cap, 40), lim)));
      return 0;
    }

    if (influence->parsed()) {
      const Classification cl = detail::classification(g, f);
      const PartialAssignment pin = detail::load_partial(pin_path, f.num_vars());
      Marking mk;
      if (marking_path.empty()) {
        const InducedFormula good = good_induced_formula(f, cl, true);
        MarkingOptions opt = detail::marking_options(g, f, mix_seed(g.seed, 0x6d61726bULL));
        opt.candidates = cl.v_good;
        mk = find_marking(good.formula, opt);
      } else {
        mk = detail::obtain_marking(g, f, marking_path);
      }
      const std::size_t kc = k_c.value_or(default_kc(mk.k_u, g.zeta));
      CouplingOptions copt;
      copt.s = s_window;
      json j = io::tagged("influence");
      j["marking"] = mk.vars;
      j["k_c"] = kc;
      const std::size_t free_vars = f.num_vars() - pin.size();
      if (free_vars <= g.cap) {
        const InfluenceMatrix im = exact_influence_matrix(f, mk, pin, g.cap);
        j["exact"] = io::to_json(im);
        j["eigenvalue"] = im.max_eigenvalue;
      } else {
        j["exact"] = nullptr;
        j["eigenvalue"] = nullptr;
      }
      j["coupling"] = io::to_json(coupling_influence_bound(f, cl, mk, pin, v0, kc, trials, g.seed, lim, copt));
      emit(j);
      return 0;
    }
    return fail(2, "usage", "no subcommand");
  } catch (const UsageError& e) {
    return fail(2, "usage", e.what());
  } catch (const InvalidArgument& e) {
    return fail(2, to_string(e.kind()), e.what());
  } catch (const ParseError& e) {
    return fail(2, to_string(e.kind()), e.what());
  } catch (const Error& e) {
    return fail(1, to_string(e.kind()), e.what());
  }
}

}  // namespace marksat::cli
