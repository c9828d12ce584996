#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpcert/cones.hpp"
#include "dpcert/deriv.hpp"
#include "dpcert/errors.hpp"
#include "dpcert/gencvx.hpp"
#include "dpcert/lp.hpp"
#include "dpcert/parallel.hpp"
#include "dpcert/problem.hpp"
#include "dpcert/rng.hpp"

namespace dpcert {

enum class Theorem { LocalOrder2, GlobalWeakKKT, GlobalStrictKKT, GlobalStrictFJ, GlobalStrictQuasiconvex };

inline const char* to_string(Theorem t) {
  switch (t) {
    case Theorem::LocalOrder2: return "local2";
    case Theorem::GlobalWeakKKT: return "kkt-weak";
    case Theorem::GlobalStrictKKT: return "kkt-strict";
    case Theorem::GlobalStrictFJ: return "fj-strict";
    case Theorem::GlobalStrictQuasiconvex: return "qc-strict";
  }
  return "?";
}

inline Theorem parse_theorem(const std::string& s) {
  for (auto t : {Theorem::LocalOrder2, Theorem::GlobalWeakKKT, Theorem::GlobalStrictKKT, Theorem::GlobalStrictFJ,
                 Theorem::GlobalStrictQuasiconvex})
    if (s == to_string(t)) return t;
  throw InputError("unknown theorem '" + s + "' (expected local2, kkt-weak, kkt-strict, fj-strict or qc-strict)");
}

enum class MultiplierMode { FJ, KKT };
enum class Strictness { Strict, NonStrict };

struct MultiplierPair {
  Vec mu;
  Vec lambda;  ///< length m; zero off the active set
  double slack = 0.0;
  bool slack_unbounded = false;  ///< the form is unbounded above; slack is the value at the s <= 1 cap
};

/// Second derivative of one function along a record's direction.
struct FunctionDeriv {
  std::string label;  ///< "f1", "g2", ...
  DirDeriv2Result value;
};

struct DirectionRecord {
  enum class Status { Satisfied, Violated, Inconclusive };
  std::size_t index = 0;
  Vec d;
  std::optional<MultiplierPair> multipliers;
  std::optional<bool> cone_condition;
  std::vector<FunctionDeriv> derivs;
  Status status = Status::Satisfied;
  std::string reason;
};

inline const char* to_string(DirectionRecord::Status s) {
  switch (s) {
    case DirectionRecord::Status::Satisfied: return "satisfied";
    case DirectionRecord::Status::Violated: return "violated";
    case DirectionRecord::Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct HypothesisReport {
  std::string function;  ///< "objective:1", "constraint:2"
  Property property;
  FalsifyReport report;
};

struct Certificate {
  enum class Verdict { CertifiedOnSamples, NotCertified, Inconclusive };
  Theorem theorem = Theorem::LocalOrder2;
  Verdict verdict = Verdict::Inconclusive;
  std::string reason;
  std::optional<std::size_t> failing_record;
  std::optional<std::size_t> failing_hypothesis;
  std::vector<HypothesisReport> hypotheses;
  std::vector<DirectionRecord> records;
  IndexSet active;
  bool vacuous = false;
  std::size_t extreme_rays = 0;
  bool short_count = false;
  std::optional<MultiplierPair> common_multipliers;

  bool certified() const { return verdict == Verdict::CertifiedOnSamples; }
};

inline const char* to_string(Certificate::Verdict v) {
  switch (v) {
    case Certificate::Verdict::CertifiedOnSamples: return "certified-on-samples";
    case Certificate::Verdict::NotCertified: return "not-certified";
    case Certificate::Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct CertifyConfig {
  std::size_t dirs = 256;
  std::uint64_t seed = 0;
  std::size_t hypothesis_samples = 1000;
  unsigned threads = 1;
  /// Replace the quasiconvexity hypotheses of qc-strict by quasiinvexity
  /// with respect to the problem's eta. Demonstrates that the weaker
  /// hypotheses do not suffice.
  bool assume_quasiinvex = false;
};

namespace detail {

inline double form_value(const Vec& mu, const Vec& lambda, const Vec& fpp, const Vec& gpp) {
  return mu.dot(fpp) + lambda.dot(gpp);
}

}  // namespace detail

/// LP over mu >= 0, lambda_I >= 0 and the free slack s:
///   sum mu_j grad f_j + sum lambda_i grad g_i = 0,  normalization = 1,
///   s <= sum mu_j f_j'' + sum lambda_i g_i'',  maximize s.
/// fpp has length p, gpp length m (entries off the active set are ignored).
inline std::optional<MultiplierPair> find_multipliers(const Problem& pr, const Point& x, const IndexSet& active,
                                                      const Vec& fpp, const Vec& gpp, MultiplierMode mode,
                                                      Strictness strictness, const Tolerances& tol) {
  const auto p = static_cast<Eigen::Index>(pr.p());
  const auto k = static_cast<Eigen::Index>(active.size());
  const Eigen::Index vars = p + k + 1;
  const Eigen::Index s_col = p + k;
  Mat G(pr.n, p + k);
  for (Eigen::Index j = 0; j < p; ++j) G.col(j) = pr.f[static_cast<std::size_t>(j)].grad(x);
  for (Eigen::Index i = 0; i < k; ++i) G.col(p + i) = pr.g[active[static_cast<std::size_t>(i)]].grad(x);

  auto build = [&](bool capped) {
    LpProblem lp(vars);
    lp.c[s_col] = 1.0;
    lp.free_lower[static_cast<std::size_t>(s_col)] = true;
    if (capped) lp.upper[static_cast<std::size_t>(s_col)] = 1.0;
    for (Eigen::Index r = 0; r < pr.n; ++r) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
      row.head(p + k) = G.row(r);
      lp.add_eq(row, 0.0);
    }
    Eigen::RowVectorXd norm = Eigen::RowVectorXd::Zero(vars);
    norm.head(mode == MultiplierMode::FJ ? p + k : p).setOnes();
    lp.add_eq(norm, 1.0);
    Eigen::RowVectorXd form = Eigen::RowVectorXd::Zero(vars);
    for (Eigen::Index j = 0; j < p; ++j) form[j] = -fpp[j];
    for (Eigen::Index i = 0; i < k; ++i) form[p + i] = -gpp[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])];
    form[s_col] = 1.0;
    lp.add_le(form, 0.0);
    return lp;
  };

  LpOutcome out = solve(build(false));
  bool unbounded = false;
  if (out.status == LpOutcome::Status::Unbounded) {
    unbounded = true;
    out = solve(build(true));
  }
  if (!out.optimal()) return std::nullopt;

  MultiplierPair mp;
  mp.mu = out.x.head(p).cwiseMax(0.0);
  mp.lambda = Vec::Zero(static_cast<Eigen::Index>(pr.m()));
  for (Eigen::Index i = 0; i < k; ++i)
    mp.lambda[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])] = std::max(0.0, out.x[p + i]);
  mp.slack_unbounded = unbounded;
  mp.slack = detail::form_value(mp.mu, mp.lambda, fpp, gpp);

  Vec residual = Vec::Zero(pr.n);
  for (Eigen::Index j = 0; j < p; ++j) residual += mp.mu[j] * G.col(j);
  for (Eigen::Index i = 0; i < k; ++i)
    residual += mp.lambda[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])] * G.col(p + i);
  const double gscale = std::max(1.0, G.size() > 0 ? G.cwiseAbs().maxCoeff() : 0.0);
  if (residual.cwiseAbs().maxCoeff() > 1e-7 * gscale) return std::nullopt;

  const bool ok = strictness == Strictness::Strict ? mp.slack > tol.tau_strict : mp.slack >= -tol.tau_strict;
  if (!ok) return std::nullopt;
  return mp;
}

/// Every nonzero w in C(x;d) n d-perp has <grad f_j, w> > 0 for some j in J(x;d).
inline bool check_cone_condition(const Problem& pr, const Point& x, const Vec& d, const Tolerances& tol) {
  return is_trivial(cone_cxd_perp(pr, x, d, true, tol), tol);
}

namespace detail {

struct TheoremShape {
  MultiplierMode mode;
  Strictness strictness;
  bool cone_condition;
  bool zero_direction;
};

inline TheoremShape shape_of(Theorem t) {
  switch (t) {
    case Theorem::LocalOrder2: return {MultiplierMode::FJ, Strictness::Strict, true, false};
    case Theorem::GlobalWeakKKT: return {MultiplierMode::KKT, Strictness::NonStrict, false, true};
    case Theorem::GlobalStrictKKT: return {MultiplierMode::KKT, Strictness::NonStrict, false, true};
    case Theorem::GlobalStrictFJ: return {MultiplierMode::FJ, Strictness::NonStrict, false, true};
    case Theorem::GlobalStrictQuasiconvex: return {MultiplierMode::KKT, Strictness::Strict, false, false};
  }
  return {};
}

inline std::vector<std::pair<std::string, Property>> hypotheses_of(Theorem t, const Problem& pr,
                                                                   const IndexSet& active, bool quasiinvex) {
  std::vector<std::pair<std::string, Property>> out;
  auto objective = [&](PropertyKind k) {
    for (std::size_t j = 0; j < pr.p(); ++j) out.push_back({"objective:" + std::to_string(j + 1), Property{k, {}}});
  };
  auto constraint = [&](PropertyKind k) {
    for (std::size_t i : active) out.push_back({"constraint:" + std::to_string(i + 1), Property{k, {}}});
  };
  switch (t) {
    case Theorem::LocalOrder2: break;
    case Theorem::GlobalWeakKKT:
      objective(PropertyKind::TwoPseudoconvex);
      constraint(PropertyKind::Quasiconvex);
      break;
    case Theorem::GlobalStrictKKT:
      objective(PropertyKind::StrictlyTwoPseudoconvex);
      constraint(PropertyKind::Quasiconvex);
      break;
    case Theorem::GlobalStrictFJ:
      objective(PropertyKind::StrictlyTwoPseudoconvex);
      constraint(PropertyKind::StrictlyTwoPseudoconvex);
      break;
    case Theorem::GlobalStrictQuasiconvex:
      objective(quasiinvex ? PropertyKind::Quasiinvex : PropertyKind::Quasiconvex);
      constraint(quasiinvex ? PropertyKind::Quasiinvex : PropertyKind::Quasiconvex);
      break;
  }
  if (quasiinvex) {
    if (!pr.eta) throw InputError("quasiinvex hypotheses need an eta in the problem");
    for (auto& [_, prop] : out) prop.eta = *pr.eta;
  }
  return out;
}

inline const Expr& labelled_function(const Problem& pr, const std::string& label) {
  const auto colon = label.find(':');
  const std::size_t idx = std::stoul(label.substr(colon + 1)) - 1;
  return label.starts_with("objective") ? pr.f[idx] : pr.g[idx];
}

inline DirectionRecord check_direction(const Problem& pr, const Point& x, const IndexSet& active, const Vec& d,
                                       std::size_t index, const TheoremShape& shape) {
  DirectionRecord rec;
  rec.index = index;
  rec.d = d;
  Vec fpp = Vec::Zero(static_cast<Eigen::Index>(pr.p()));
  Vec gpp = Vec::Zero(static_cast<Eigen::Index>(pr.m()));
  const bool zero = d.isZero(0.0);
  if (!zero) {
    std::string missing;
    auto take = [&](const Expr& e, const std::string& label, double& slot) {
      DirDeriv2Result r = second_dp(e, x, d, pr.deriv);
      if (r.finite()) slot = r.value();
      else if (missing.empty()) missing = label + " has " + r.kind() + " second derivative";
      rec.derivs.push_back({label, std::move(r)});
    };
    try {
      for (std::size_t j = 0; j < pr.p(); ++j)
        take(pr.f[j], "f" + std::to_string(j + 1), fpp[static_cast<Eigen::Index>(j)]);
      for (std::size_t i : active) take(pr.g[i], "g" + std::to_string(i + 1), gpp[static_cast<Eigen::Index>(i)]);
    } catch (const DomainError& e) {
      missing = std::string("evaluation failed along the ray: ") + e.what();
    }
    if (!missing.empty()) {
      rec.status = DirectionRecord::Status::Inconclusive;
      rec.reason = missing;
      return rec;
    }
  }
  try {
    rec.multipliers = find_multipliers(pr, x, active, fpp, gpp, shape.mode, shape.strictness, pr.tol);
    if (shape.cone_condition && !zero) rec.cone_condition = check_cone_condition(pr, x, d, pr.tol);
  } catch (const SolverStalled& e) {
    rec.status = DirectionRecord::Status::Inconclusive;
    rec.reason = e.what();
    return rec;
  }
  if (!rec.multipliers) {
    rec.status = DirectionRecord::Status::Violated;
    rec.reason = std::string("no ") + (shape.mode == MultiplierMode::FJ ? "Fritz-John" : "KKT") +
                 " multipliers with second-order form " +
                 (shape.strictness == Strictness::Strict ? "> tau_strict" : ">= -tau_strict");
  } else if (rec.cone_condition && !*rec.cone_condition) {
    rec.status = DirectionRecord::Status::Violated;
    rec.reason = "cone condition fails: a nonzero w in C(x;d) n d-perp has <grad f_j, w> <= 0 for all j in J(x;d)";
  }
  return rec;
}

/// Re-tests the first record's multipliers on every other direction.
inline std::optional<MultiplierPair> common_pair(const Problem& pr, const std::vector<DirectionRecord>& recs,
                                                 Strictness strictness) {
  if (recs.empty() || !recs.front().multipliers) return std::nullopt;
  MultiplierPair mp = *recs.front().multipliers;
  double worst = mp.slack;
  for (const auto& r : recs) {
    Vec fpp = Vec::Zero(static_cast<Eigen::Index>(pr.p()));
    Vec gpp = Vec::Zero(static_cast<Eigen::Index>(pr.m()));
    for (const auto& fd : r.derivs) {
      const std::size_t idx = std::stoul(fd.label.substr(1)) - 1;
      (fd.label[0] == 'f' ? fpp : gpp)[static_cast<Eigen::Index>(idx)] = fd.value.value();
    }
    const double s = detail::form_value(mp.mu, mp.lambda, fpp, gpp);
    const bool ok = strictness == Strictness::Strict ? s > pr.tol.tau_strict : s >= -pr.tol.tau_strict;
    if (!ok) return std::nullopt;
    worst = std::min(worst, s);
  }
  mp.slack = worst;
  mp.slack_unbounded = false;
  return mp;
}

}  // namespace detail

/// Runs one of the five sufficiency checks at x. Directions are the seeded
/// sample of the critical cone; records are ordered by sample index.
inline Certificate certify(const Problem& pr, const Point& x, Theorem theorem, const CertifyConfig& cfg = {}) {
  pr.validate();
  require_point(x, pr.n);
  Certificate cert;
  cert.theorem = theorem;
  cert.active = active_constraints(pr, x, pr.tol);
  const auto shape = detail::shape_of(theorem);
  const bool quasiinvex = cfg.assume_quasiinvex && theorem == Theorem::GlobalStrictQuasiconvex;
  if (cfg.assume_quasiinvex && !quasiinvex)
    throw InputError("assume_quasiinvex only applies to qc-strict");

  bool hypothesis_inconclusive = false;
  const auto hyps = detail::hypotheses_of(theorem, pr, cert.active, quasiinvex);
  for (std::size_t h = 0; h < hyps.size(); ++h) {
    FalsifyConfig fc;
    fc.box = pr.box;
    fc.n_samples = cfg.hypothesis_samples;
    fc.seed = split_seed(cfg.seed, 0x48595000u + h);
    fc.tol = pr.tol;
    fc.deriv = pr.deriv;
    fc.threads = cfg.threads;
    const Expr& fn = detail::labelled_function(pr, hyps[h].first);
    cert.hypotheses.push_back({hyps[h].first, hyps[h].second, falsify(fn, x, hyps[h].second, fc)});
    const auto& rep = cert.hypotheses.back().report;
    if (rep.falsified() && !cert.failing_hypothesis) cert.failing_hypothesis = h;
    if (rep.status == FalsifyReport::Status::Inconclusive) hypothesis_inconclusive = true;
  }
  if (cert.failing_hypothesis) {
    cert.verdict = Certificate::Verdict::NotCertified;
    cert.reason = "hypothesis falsified:";
    for (const auto& h : cert.hypotheses)
      if (h.report.falsified())
        cert.reason += std::string(cert.reason.back() == ':' ? " " : ", ") + h.function + " is not " +
                       to_string(h.property.kind);
    return cert;
  }

  const ConeH cone = critical_cone(pr, x, pr.tol);
  std::vector<Vec> dirs;
  if (is_trivial(cone, pr.tol)) {
    cert.vacuous = true;
  } else {
    ConeSample s = sample_unit(cone, cfg.dirs, cfg.seed, pr.tol, cfg.threads);
    dirs = std::move(s.dirs);
    cert.extreme_rays = s.extreme_rays;
    cert.short_count = s.short_count;
  }
  if (shape.zero_direction) dirs.push_back(Vec::Zero(pr.n));

  cert.records.resize(dirs.size());
  parallel_for(dirs.size(), cfg.threads, [&](std::size_t i) {
    cert.records[i] = detail::check_direction(pr, x, cert.active, dirs[i], i, shape);
  });

  for (const auto& r : cert.records)
    if (r.status == DirectionRecord::Status::Violated) {
      cert.failing_record = r.index;
      break;
    }
  if (!cert.failing_record)
    for (const auto& r : cert.records)
      if (r.status == DirectionRecord::Status::Inconclusive) {
        cert.failing_record = r.index;
        break;
      }

  if (cert.failing_record && cert.records[*cert.failing_record].status == DirectionRecord::Status::Violated) {
    cert.verdict = Certificate::Verdict::NotCertified;
    cert.reason = "direction " + std::to_string(*cert.failing_record) + ": " + cert.records[*cert.failing_record].reason;
  } else if (cert.failing_record) {
    cert.verdict = Certificate::Verdict::Inconclusive;
    cert.reason = "direction " + std::to_string(*cert.failing_record) + ": " + cert.records[*cert.failing_record].reason;
  } else if (hypothesis_inconclusive) {
    cert.verdict = Certificate::Verdict::Inconclusive;
    cert.reason = "a hypothesis falsifier could not evaluate enough samples";
  } else {
    cert.verdict = Certificate::Verdict::CertifiedOnSamples;
    cert.common_multipliers = detail::common_pair(pr, cert.records, shape.strictness);
    if (cert.vacuous) cert.reason = "critical cone is {0}; the direction clauses hold vacuously";
    else cert.reason = "all " + std::to_string(cert.records.size()) + " sampled directions satisfied";
    if (!hyps.empty()) cert.reason += "; hypotheses not falsified on the box (sample evidence only)";
  }
  return cert;
}

}  // namespace dpcert
