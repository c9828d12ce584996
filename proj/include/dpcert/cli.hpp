#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpcert/certify.hpp"
#include "dpcert/deriv.hpp"
#include "dpcert/gencvx.hpp"
#include "dpcert/io.hpp"
#include "dpcert/oracle.hpp"

namespace dpcert::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kNegative = 1, kInconclusive = 2, kUsage = 64, kData = 65 };

using io::json;

/// A subcommand fully described by its configuration snapshot.
struct Job {
  std::string command;
  json config;
};

struct Outcome {
  json result;
  int exit_code = kOk;
};

namespace detail {

struct FunctionRef {
  bool objective = true;
  std::size_t index = 0;  ///< zero based

  std::string label() const { return std::string(objective ? "objective:" : "constraint:") + std::to_string(index + 1); }
};

/// "objective:k" or "constraint:k", checked against the problem.
inline FunctionRef parse_function_ref(const std::string& text, const Problem& pr) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InputError("function reference must be objective:<k> or constraint:<k>");
  const std::string head = text.substr(0, colon);
  const std::string tail = text.substr(colon + 1);
  FunctionRef ref;
  if (head == "objective") ref.objective = true;
  else if (head == "constraint") ref.objective = false;
  else throw InputError("unknown function kind '" + head + "'");
  if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos)
    throw InputError("function index must be a positive integer");
  const std::size_t k = std::stoul(tail);
  const std::size_t count = ref.objective ? pr.p() : pr.m();
  if (k < 1 || k > count) throw InputError("function index " + tail + " is out of range");
  ref.index = k - 1;
  return ref;
}

inline const Expr& function_of(const Problem& pr, const FunctionRef& ref) {
  return ref.objective ? pr.f[ref.index] : pr.g[ref.index];
}

inline Point point_from(const json& j, int n) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(n)) throw InputError("point must have n coordinates");
  Point x(n);
  for (int i = 0; i < n; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw InputError("point coordinates must be numbers");
    x[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return x;
}

template <class T>
T field(const json& cfg, const char* key) {
  if (!cfg.contains(key)) throw InputError(std::string("config is missing '") + key + "'");
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline int certify_exit(Certificate::Verdict v) {
  switch (v) {
    case Certificate::Verdict::CertifiedOnSamples: return kOk;
    case Certificate::Verdict::NotCertified: return kNegative;
    case Certificate::Verdict::Inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

inline int oracle_exit(OracleVerdict::Status s) {
  switch (s) {
    case OracleVerdict::Status::Supported: return kOk;
    case OracleVerdict::Status::Falsified: return kNegative;
    case OracleVerdict::Status::Inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

inline int falsify_exit(FalsifyReport::Status s) {
  switch (s) {
    case FalsifyReport::Status::NotFalsified: return kOk;
    case FalsifyReport::Status::Falsified: return kNegative;
    case FalsifyReport::Status::Inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

inline Outcome run_certify(const json& cfg, unsigned threads) {
  const Problem pr = io::problem_from_json(field<json>(cfg, "problem"));
  const Point x = point_from(field<json>(cfg, "point"), pr.n);
  CertifyConfig cc;
  cc.dirs = field<std::size_t>(cfg, "dirs");
  cc.seed = field<std::uint64_t>(cfg, "seed");
  cc.hypothesis_samples = field<std::size_t>(cfg, "samples");
  cc.assume_quasiinvex = field<bool>(cfg, "assume_quasiinvex");
  cc.threads = threads;
  const Theorem t = parse_theorem(field<std::string>(cfg, "theorem"));
  const Certificate cert = certify(pr, x, t, cc);
  return {io::to_json(cert, pr, x), certify_exit(cert.verdict)};
}

inline Outcome run_oracle(const json& cfg, unsigned threads) {
  Problem pr = io::problem_from_json(field<json>(cfg, "problem"));
  const Point x = point_from(field<json>(cfg, "point"), pr.n);
  pr.oracle.n_samples = field<std::size_t>(cfg, "samples");
  pr.validate();
  const OracleKind kind = parse_oracle_kind(field<std::string>(cfg, "kind"));
  const OracleVerdict v = check_efficiency(pr, x, kind, {field<std::uint64_t>(cfg, "seed"), threads});
  json r = io::to_json(v);
  if (v.witness) r["recheck"] = recheck_oracle_witness(pr, x, kind, *v.witness);
  return {r, oracle_exit(v.status)};
}

inline Outcome run_falsify(const json& cfg, unsigned threads) {
  const Problem pr = io::problem_from_json(field<json>(cfg, "problem"));
  const Point x = point_from(field<json>(cfg, "point"), pr.n);
  Property prop;
  prop.kind = parse_property_kind(field<std::string>(cfg, "property"));
  if (prop.kind == PropertyKind::Quasiinvex) {
    if (!pr.eta) throw InputError("quasiinvex needs an eta in the problem file");
    prop.eta = *pr.eta;
  }
  const FunctionRef ref = parse_function_ref(field<std::string>(cfg, "function"), pr);
  FalsifyConfig fc;
  fc.box = pr.box;
  fc.n_samples = field<std::size_t>(cfg, "samples");
  fc.seed = field<std::uint64_t>(cfg, "seed");
  fc.tol = pr.tol;
  fc.deriv = pr.deriv;
  fc.t_grid = field<int>(cfg, "t_grid");
  fc.threads = threads;
  if (fc.n_samples == 0) throw InputError("samples must be positive");
  if (fc.t_grid < 1) throw InputError("t-grid must be positive");
  const Expr& phi = function_of(pr, ref);
  const FalsifyReport rep = falsify(phi, x, prop, fc);
  std::optional<bool> recheck;
  if (rep.witness) recheck = recheck_witness(phi, x, prop, *rep.witness, pr.tol, pr.deriv);
  json r = io::to_json(rep, recheck);
  r["function"] = ref.label();
  return {r, falsify_exit(rep.status)};
}

inline Outcome run_deriv(const json& cfg) {
  const Problem pr = io::problem_from_json(field<json>(cfg, "problem"));
  const Point x = point_from(field<json>(cfg, "point"), pr.n);
  const Vec d = point_from(field<json>(cfg, "direction"), pr.n);
  if (d.isZero(0.0)) throw InputError("direction must be nonzero");
  const FunctionRef ref = parse_function_ref(field<std::string>(cfg, "function"), pr);
  const Expr& phi = function_of(pr, ref);
  json r;
  r["function"] = ref.label();
  r["value"] = phi.eval(x);
  const Vec grad = phi.grad(x);
  r["gradient"] = io::vec(grad);
  r["first"] = grad.dot(d);
  r["dp"] = io::to_json(second_dp(phi, x, d, pr.deriv));
  r["ad"] = io::opt(second_ad(phi, x, d));
  r["hadamard"] = io::to_json(hadamard_second_estimate(phi, x, d, pr.deriv));
  const StabilityEstimate st = gradient_stability_estimate(phi, x, pr.deriv);
  r["stability"] = {{"bounded", st.bounded},
                    {"modulus_estimate", st.modulus_estimate},
                    {"shell_ratios", st.shell_ratios},
                    {"skipped", st.skipped}};
  return {r, kOk};
}

inline Outcome run_harness(const json& cfg, unsigned threads) {
  HarnessConfig hc;
  hc.certify.dirs = field<std::size_t>(cfg, "dirs");
  hc.certify.hypothesis_samples = field<std::size_t>(cfg, "samples");
  hc.certify.threads = threads;
  hc.oracle.threads = threads;
  hc.santos_gap = field<bool>(cfg, "santos_gap");
  const std::uint64_t seed = field<std::uint64_t>(cfg, "seed");
  hc.certify.seed = seed;
  hc.oracle.seed = seed;
  const auto cls = parse_problem_class(field<std::string>(cfg, "class"));
  const HarnessReport rep = cross_validate(field<std::size_t>(cfg, "instances"), seed, cls, hc);
  return {io::to_json(rep), rep.violations > 0 ? kNegative : kOk};
}

}  // namespace detail

inline Outcome execute(const Job& job, unsigned threads) {
  if (!job.config.is_object()) throw InputError("config must be a JSON object");
  if (job.command == "certify") return detail::run_certify(job.config, threads);
  if (job.command == "oracle") return detail::run_oracle(job.config, threads);
  if (job.command == "falsify") return detail::run_falsify(job.config, threads);
  if (job.command == "deriv") return detail::run_deriv(job.config);
  if (job.command == "harness") return detail::run_harness(job.config, threads);
  throw InputError("unknown command '" + job.command + "'");
}

inline json make_report(const Job& job, const Outcome& o) {
  json rep;
  rep["tool"] = "dpcert";
  rep["version"] = kVersion;
  rep["command"] = job.command;
  rep["input_digest"] = io::hex64(io::fnv1a64(job.config.dump()));
  rep["config"] = job.config;
  rep["exit_code"] = o.exit_code;
  rep["result"] = o.result;
  return rep;
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InputError("cannot rename onto '" + path + "'");
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Second-order optimality certificates for vector optimization problems", "dpcert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string problem_path, point_text, out_path;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool timing = false;

  auto common = [&](CLI::App* sub, bool needs_problem) {
    if (needs_problem) {
      sub->add_option("--problem", problem_path, "problem file (JSON)")->required();
      sub->add_option("--point", point_text, "candidate point, comma separated")->required();
    }
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    sub->add_flag("--timing", timing, "add wall-clock timing to the report");
  };

  auto* certify_cmd = app.add_subcommand("certify", "check a sufficient condition at a point");
  common(certify_cmd, true);
  std::string theorem;
  std::size_t dirs = 256, hyp_samples = 1000;
  bool quasiinvex = false;
  certify_cmd->add_option("--theorem", theorem, "theorem to check")
      ->required()
      ->check(CLI::IsMember({"local2", "kkt-weak", "kkt-strict", "fj-strict", "qc-strict"}));
  certify_cmd->add_option("--dirs", dirs, "critical directions to sample")->capture_default_str();
  certify_cmd->add_option("--samples", hyp_samples, "samples per hypothesis falsifier")->capture_default_str();
  certify_cmd->add_flag("--assume-quasiinvex", quasiinvex, "qc-strict only: use quasiinvexity w.r.t. eta");

  auto* oracle_cmd = app.add_subcommand("oracle", "brute-force efficiency check");
  common(oracle_cmd, true);
  std::string kind;
  std::optional<std::size_t> oracle_samples;
  oracle_cmd->add_option("--kind", kind, "efficiency notion")
      ->required()
      ->check(CLI::IsMember({"weak", "efficient", "strict-global", "local2"}));
  oracle_cmd->add_option("--samples", oracle_samples, "sample budget (default from the problem file)");

  auto* falsify_cmd = app.add_subcommand("falsify", "search for a generalized-convexity violation");
  common(falsify_cmd, true);
  std::string property;
  std::size_t fals_samples = 1000;
  int t_grid = 16;
  falsify_cmd->add_option("--property", property, "<property>:objective|constraint:<k>")->required();
  falsify_cmd->add_option("--samples", fals_samples, "sample budget")->capture_default_str();
  falsify_cmd->add_option("--t-grid", t_grid, "segment grid for quasiconvexity")->capture_default_str();

  auto* deriv_cmd = app.add_subcommand("deriv", "directional derivative diagnostics");
  common(deriv_cmd, true);
  std::string function, direction;
  deriv_cmd->add_option("--function", function, "objective:<k> or constraint:<k>")->required();
  deriv_cmd->add_option("--direction", direction, "direction, comma separated")->required();

  auto* harness_cmd = app.add_subcommand("harness", "cross-validate certificates against oracles");
  common(harness_cmd, false);
  std::size_t instances = 10, h_dirs = 64, h_samples = 1000;
  std::string cls = "convex-quadratic";
  bool santos = false;
  harness_cmd->add_option("--instances", instances, "random instances")->capture_default_str();
  harness_cmd->add_option("--class", cls, "problem class")
      ->capture_default_str()
      ->check(CLI::IsMember({"convex-quadratic", "polynomial"}));
  harness_cmd->add_option("--dirs", h_dirs, "directions per certificate")->capture_default_str();
  harness_cmd->add_option("--samples", h_samples, "samples per hypothesis falsifier")->capture_default_str();
  harness_cmd->add_flag("--santos-gap", santos, "append the quasiinvex counter-example");

  auto* replay_cmd = app.add_subcommand("replay", "re-run the job recorded in a report");
  std::string report_path;
  replay_cmd->add_option("--report", report_path, "report JSON")->required();
  replay_cmd->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
  replay_cmd->add_option("--out", out_path, "write the report here instead of stdout");
  replay_cmd->add_flag("--timing", timing, "add wall-clock timing to the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Job job;
    auto with_problem = [&](const std::string& command) {
      job.command = command;
      const Problem pr = io::load_problem(problem_path);
      job.config["problem"] = io::problem_to_json(pr);
      job.config["point"] = io::vec(parse_point(point_text, pr.n));
      job.config["seed"] = seed;
      return pr;
    };
    if (certify_cmd->parsed()) {
      with_problem("certify");
      job.config["theorem"] = theorem;
      job.config["dirs"] = dirs;
      job.config["samples"] = hyp_samples;
      job.config["assume_quasiinvex"] = quasiinvex;
    } else if (oracle_cmd->parsed()) {
      const Problem pr = with_problem("oracle");
      job.config["kind"] = kind;
      job.config["samples"] = oracle_samples.value_or(pr.oracle.n_samples);
    } else if (falsify_cmd->parsed()) {
      with_problem("falsify");
      const auto colon = property.find(':');
      if (colon == std::string::npos) throw InputError("--property must be <property>:objective|constraint:<k>");
      job.config["property"] = property.substr(0, colon);
      job.config["function"] = property.substr(colon + 1);
      job.config["samples"] = fals_samples;
      job.config["t_grid"] = t_grid;
    } else if (deriv_cmd->parsed()) {
      const Problem pr = with_problem("deriv");
      job.config.erase("seed");
      job.config["function"] = function;
      job.config["direction"] = io::vec(parse_point(direction, pr.n));
    } else if (harness_cmd->parsed()) {
      job.command = "harness";
      job.config["instances"] = instances;
      job.config["class"] = cls;
      job.config["seed"] = seed;
      job.config["dirs"] = h_dirs;
      job.config["samples"] = h_samples;
      job.config["santos_gap"] = santos;
    } else {
      const json old = io::read_json_file(report_path);
      if (!old.is_object() || !old.contains("command") || !old.contains("config") || !old.at("command").is_string())
        throw InputError("'" + report_path + "' is not a dpcert report");
      job.command = old.at("command").get<std::string>();
      job.config = old.at("config");
    }

    const auto start = std::chrono::steady_clock::now();
    const Outcome outcome = execute(job, threads);
    json report = make_report(job, outcome);
    if (timing) {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      report["timing"] = {{"wall_seconds", dt.count()}, {"threads", threads}};
    }
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty()) out << text << std::flush;
    else write_atomic(out_path, text);
    return outcome.exit_code;
  } catch (const Error& e) {
    err << "dpcert: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "dpcert: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace dpcert::cli
