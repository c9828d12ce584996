#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpcert/certify.hpp"
#include "dpcert/deriv.hpp"
#include "dpcert/errors.hpp"
#include "dpcert/gencvx.hpp"
#include "dpcert/oracle.hpp"
#include "dpcert/problem.hpp"

namespace dpcert::io {

using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline json vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json index_set(const IndexSet& s) {
  json a = json::array();
  for (std::size_t i : s) a.push_back(i + 1);
  return a;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------------------
// Problem files.

namespace detail {

inline void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw InputError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + "." + key + " has the wrong type");
  }
}

inline std::vector<std::string> strings(const json& v, const std::string& where) {
  if (!v.is_array()) throw InputError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw InputError(where + " must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline Problem problem_from_json(const json& j) {
  detail::only_keys(j, {"n", "objectives", "constraints", "box", "eta", "tolerances", "deriv", "oracle"}, "problem");
  if (!j.contains("n") || !j.at("n").is_number_integer()) throw InputError("problem.n must be an integer");
  const int n = j.at("n").get<int>();
  if (n < 1) throw InputError("problem.n must be positive");
  if (!j.contains("objectives")) throw InputError("problem.objectives is required");
  const auto obj = detail::strings(j.at("objectives"), "problem.objectives");
  const auto con = j.contains("constraints") ? detail::strings(j.at("constraints"), "problem.constraints")
                                             : std::vector<std::string>{};
  if (!j.contains("box") || !j.at("box").is_array() || j.at("box").size() != static_cast<std::size_t>(n))
    throw InputError("problem.box must list n [lo, hi] pairs");
  Box box;
  for (const auto& pair : j.at("box")) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
      throw InputError("problem.box entries must be [lo, hi] number pairs");
    box.lo.push_back(pair[0].get<double>());
    box.hi.push_back(pair[1].get<double>());
  }
  Problem pr = Problem::make(n, obj, con, box);
  if (j.contains("eta")) pr.eta = detail::strings(j.at("eta"), "problem.eta");
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    detail::only_keys(t, {"eps_active", "eps_feas", "eps_zero", "tau_strict"}, "problem.tolerances");
    detail::read_field(t, "eps_active", pr.tol.eps_active, "tolerances");
    detail::read_field(t, "eps_feas", pr.tol.eps_feas, "tolerances");
    detail::read_field(t, "eps_zero", pr.tol.eps_zero, "tolerances");
    detail::read_field(t, "tau_strict", pr.tol.tau_strict, "tolerances");
  }
  if (j.contains("deriv")) {
    const json& d = j.at("deriv");
    detail::only_keys(d, {"t0", "rho", "max_steps", "window", "tol_rel", "tol_abs"}, "problem.deriv");
    detail::read_field(d, "t0", pr.deriv.t0, "deriv");
    detail::read_field(d, "rho", pr.deriv.rho, "deriv");
    detail::read_field(d, "max_steps", pr.deriv.max_steps, "deriv");
    detail::read_field(d, "window", pr.deriv.window, "deriv");
    detail::read_field(d, "tol_rel", pr.deriv.tol_rel, "deriv");
    detail::read_field(d, "tol_abs", pr.deriv.tol_abs, "deriv");
  }
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    detail::only_keys(o, {"n_samples", "shells", "r0", "alpha_min"}, "problem.oracle");
    detail::read_field(o, "n_samples", pr.oracle.n_samples, "oracle");
    detail::read_field(o, "shells", pr.oracle.shells, "oracle");
    detail::read_field(o, "r0", pr.oracle.r0, "oracle");
    detail::read_field(o, "alpha_min", pr.oracle.alpha_min, "oracle");
  }
  pr.validate();
  return pr;
}

/// Canonical form with every setting spelled out.
inline json problem_to_json(const Problem& pr) {
  json j;
  j["n"] = pr.n;
  j["objectives"] = pr.objective_text;
  j["constraints"] = pr.constraint_text;
  json box = json::array();
  for (std::size_t i = 0; i < pr.box.dim(); ++i) box.push_back({pr.box.lo[i], pr.box.hi[i]});
  j["box"] = box;
  if (pr.eta) j["eta"] = *pr.eta;
  j["tolerances"] = {{"eps_active", pr.tol.eps_active},
                     {"eps_feas", pr.tol.eps_feas},
                     {"eps_zero", pr.tol.eps_zero},
                     {"tau_strict", pr.tol.tau_strict}};
  j["deriv"] = {{"t0", pr.deriv.t0},         {"rho", pr.deriv.rho},         {"max_steps", pr.deriv.max_steps},
                {"window", pr.deriv.window}, {"tol_rel", pr.deriv.tol_rel}, {"tol_abs", pr.deriv.tol_abs}};
  j["oracle"] = {{"n_samples", pr.oracle.n_samples},
                 {"shells", pr.oracle.shells},
                 {"r0", pr.oracle.r0},
                 {"alpha_min", pr.oracle.alpha_min}};
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline Problem load_problem(const std::string& path) { return problem_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Result payloads.

inline json to_json(const DirDeriv2Result& r) {
  json j;
  j["kind"] = r.kind();
  if (r.finite()) {
    j["value"] = r.value();
    j["uncertainty"] = r.uncertainty();
    j["path"] = to_string(r.as_finite().path);
  } else if (const auto* dv = std::get_if<DivergentLimit>(&r.outcome)) {
    j["sign"] = dv->sign;
  } else {
    const auto& nl = std::get<NoLimit>(r.outcome);
    j["amplitude"] = nl.amplitude;
    j["trace"] = nl.trace;
  }
  return j;
}

inline json to_json(const Witness& w) {
  json j;
  j["y"] = vec(w.y);
  j["t"] = opt(w.t);
  j["phi_y"] = w.phi_y;
  j["phi_bar"] = w.phi_bar;
  j["phi_t"] = opt(w.phi_t);
  j["inner"] = opt(w.inner);
  j["second"] = opt(w.second);
  return j;
}

inline json to_json(const FalsifyReport& r, std::optional<bool> recheck = std::nullopt) {
  json j;
  j["property"] = to_string(r.kind);
  j["status"] = to_string(r.status);
  j["clause"] = r.clause;
  j["reason"] = r.reason;
  j["samples_used"] = r.samples_used;
  j["antecedent_hits"] = r.antecedent_hits;
  j["skipped"] = r.skipped;
  j["undecided"] = r.undecided;
  j["witness"] = r.witness ? to_json(*r.witness) : json(nullptr);
  j["recheck"] = opt(recheck);
  return j;
}

inline json to_json(const MultiplierPair& mp) {
  return {{"mu", vec(mp.mu)},
          {"lambda", vec(mp.lambda)},
          {"slack", mp.slack},
          {"slack_unbounded", mp.slack_unbounded}};
}

inline json to_json(const DirectionRecord& r) {
  json j;
  j["index"] = r.index;
  j["d"] = vec(r.d);
  j["status"] = to_string(r.status);
  j["reason"] = r.reason;
  j["multipliers"] = r.multipliers ? to_json(*r.multipliers) : json(nullptr);
  j["cone_condition"] = opt(r.cone_condition);
  json derivs = json::array();
  for (const auto& fd : r.derivs) {
    json e = to_json(fd.value);
    e["function"] = fd.label;
    derivs.push_back(e);
  }
  j["derivs"] = derivs;
  return j;
}

inline json to_json(const Certificate& c, const Problem& pr, const Point& x) {
  json j;
  j["theorem"] = to_string(c.theorem);
  j["verdict"] = to_string(c.verdict);
  j["reason"] = c.reason;
  j["active"] = index_set(c.active);
  j["vacuous"] = c.vacuous;
  j["directions"] = {{"sampled", c.records.size()}, {"extreme_rays", c.extreme_rays}, {"short_count", c.short_count}};
  j["failing_record"] = opt(c.failing_record);
  j["failing_hypothesis"] = opt(c.failing_hypothesis);
  json hyps = json::array();
  for (const auto& h : c.hypotheses) {
    std::optional<bool> recheck;
    if (h.report.falsified())
      recheck = recheck_witness(dpcert::detail::labelled_function(pr, h.function), x, h.property, *h.report.witness, pr.tol, pr.deriv);
    hyps.push_back({{"function", h.function}, {"report", to_json(h.report, recheck)}});
  }
  j["hypotheses"] = hyps;
  j["common_multipliers"] = c.common_multipliers ? to_json(*c.common_multipliers) : json(nullptr);
  json recs = json::array();
  for (const auto& r : c.records) recs.push_back(to_json(r));
  j["records"] = recs;
  return j;
}

inline json to_json(const OracleVerdict& v) {
  json j;
  j["kind"] = to_string(v.kind);
  j["status"] = to_string(v.status);
  j["reason"] = v.reason;
  j["samples"] = v.samples;
  j["feasible"] = v.feasible;
  j["base_values"] = vec(v.base_values);
  j["witness"] = v.witness ? vec(*v.witness) : json(nullptr);
  j["witness_values"] = v.witness ? vec(v.witness_values) : json(nullptr);
  j["margin"] = opt(v.margin);
  if (v.kind == OracleKind::StrictLocalOrder2) {
    json shells = json::array();
    for (double q : v.shell_min_q) shells.push_back(std::isfinite(q) ? json(q) : json(nullptr));
    j["shell_min_q"] = shells;
  }
  return j;
}

inline json to_json(const HarnessReport& r) {
  json j;
  j["instances"] = r.instances;
  j["seed"] = r.seed;
  j["class"] = to_string(r.cls);
  j["cases"] = r.cases.size();
  j["certified"] = r.certified;
  j["oracle_checked"] = r.oracle_checked;
  j["violations"] = r.violations;
  j["intentional_violations"] = r.intentional_violations;
  json listed = json::array();
  json table = json::array();
  for (const auto& c : r.cases) {
    json e = {{"instance", c.instance},
              {"theorem", to_string(c.theorem)},
              {"verdict", to_string(c.verdict)},
              {"oracle", c.oracle ? json(to_string(c.oracle->status)) : json(nullptr)}};
    table.push_back(e);
    if (c.violation) {
      e["intentional"] = c.intentional;
      e["oracle_kind"] = to_string(c.oracle->kind);
      e["witness"] = vec(*c.oracle->witness);
      e["witness_values"] = vec(c.oracle->witness_values);
      e["base_values"] = vec(c.oracle->base_values);
      listed.push_back(e);
    }
  }
  j["soundness_violations"] = listed;
  j["table"] = table;
  return j;
}

}  // namespace dpcert::io
