#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpcert/certify.hpp"
#include "dpcert/cones.hpp"
#include "dpcert/errors.hpp"
#include "dpcert/parallel.hpp"
#include "dpcert/problem.hpp"
#include "dpcert/rng.hpp"

namespace dpcert {

enum class OracleKind { GlobalWeak, GlobalEfficient, StrictGlobal, StrictLocalOrder2 };

inline const char* to_string(OracleKind k) {
  switch (k) {
    case OracleKind::GlobalWeak: return "weak";
    case OracleKind::GlobalEfficient: return "efficient";
    case OracleKind::StrictGlobal: return "strict-global";
    case OracleKind::StrictLocalOrder2: return "local2";
  }
  return "?";
}

inline OracleKind parse_oracle_kind(const std::string& s) {
  for (auto k : {OracleKind::GlobalWeak, OracleKind::GlobalEfficient, OracleKind::StrictGlobal,
                 OracleKind::StrictLocalOrder2})
    if (s == to_string(k)) return k;
  throw InputError("unknown oracle kind '" + s + "' (expected weak, efficient, strict-global or local2)");
}

struct OracleVerdict {
  enum class Status { Supported, Falsified, Inconclusive };
  Status status = Status::Inconclusive;
  OracleKind kind = OracleKind::GlobalWeak;
  std::optional<Point> witness;
  Vec witness_values;  ///< f(witness)
  Vec base_values;     ///< f(xbar)
  std::string reason;
  std::size_t samples = 0;   ///< samples drawn
  std::size_t feasible = 0;  ///< of which feasible
  /// Global kinds: min over feasible samples of max_j (f_j(x) - f_j(xbar)).
  /// Order-2 kind: min q over all shells.
  std::optional<double> margin;
  std::vector<double> shell_min_q;  ///< order-2 kind, outermost shell first

  bool falsified() const { return status == Status::Falsified; }
};

inline const char* to_string(OracleVerdict::Status s) {
  switch (s) {
    case OracleVerdict::Status::Supported: return "supported";
    case OracleVerdict::Status::Falsified: return "falsified";
    case OracleVerdict::Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct OracleRun {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Smallest distance from xbar at which a strict-global witness is accepted.
inline constexpr double kMinSeparation = 1e-3;

namespace detail {

/// Newton steps onto {g = 0}; nullopt when they fail to converge.
inline std::optional<Point> project_level(const Expr& g, Point y) {
  for (int it = 0; it < 30; ++it) {
    const double v = g.eval(y);
    if (std::fabs(v) <= 1e-14 * (1.0 + y.cwiseAbs().maxCoeff())) return y;
    const Vec gr = g.grad(y);
    const double g2 = gr.squaredNorm();
    if (!(g2 > 0.0)) return std::nullopt;
    y -= (v / g2) * gr;
  }
  return std::nullopt;
}

inline bool strictly_feasible(const Problem& pr, const Point& x) {
  for (const auto& gi : pr.g)
    if (!(gi.eval(x) <= 0.0)) return false;
  return true;
}

inline double oracle_tau(double fbar) { return 1e-9 * (1.0 + std::fabs(fbar)); }

}  // namespace detail

/// Re-evaluates a global-kind witness from scratch.
inline bool recheck_oracle_witness(const Problem& pr, const Point& xbar, OracleKind kind, const Point& x) {
  try {
    require_point(x, pr.n);
    if (!pr.box.contains(x) || !pr.feasible(x)) return false;
    const Vec fb = pr.objectives(xbar);
    const Vec fx = pr.objectives(x);
    bool all_le = true, all_lt = true, some_lt = false;
    for (Eigen::Index j = 0; j < fb.size(); ++j) {
      const double tau = detail::oracle_tau(fb[j]);
      all_le = all_le && fx[j] <= fb[j] + tau;
      all_lt = all_lt && fx[j] < fb[j] - tau;
      some_lt = some_lt || fx[j] <= fb[j] - tau;
    }
    switch (kind) {
      case OracleKind::GlobalWeak: return all_lt;
      case OracleKind::GlobalEfficient: return all_le && some_lt;
      case OracleKind::StrictGlobal: return all_le && (x - xbar).norm() >= kMinSeparation;
      case OracleKind::StrictLocalOrder2: return false;
    }
  } catch (const Error&) {
  }
  return false;
}

namespace detail {

struct GlobalSample {
  bool valid = false;
  bool feasible = false;
  Point x;
  Vec fx;
};

/// Sample i: even indices uniform in the box, odd ones pulled onto the zero
/// set of a randomly chosen constraint.
inline GlobalSample global_sample(const Problem& pr, std::size_t i, std::uint64_t seed) {
  GlobalSample s;
  Rng rng(split_seed(seed, i));
  Point y(pr.n);
  for (int k = 0; k < pr.n; ++k)
    y[k] = rng.uniform(pr.box.lo[static_cast<std::size_t>(k)], pr.box.hi[static_cast<std::size_t>(k)]);
  try {
    if (i % 2 == 1 && pr.m() > 0) {
      const auto proj = project_level(pr.g[rng.below(pr.m())], y);
      if (!proj || !pr.box.contains(*proj)) return s;
      y = *proj;
    }
    s.x = y;
    s.valid = true;
    s.feasible = strictly_feasible(pr, y);
    if (s.feasible) s.fx = pr.objectives(y);
  } catch (const DomainError&) {
    s.valid = false;
  } catch (const KinkError&) {
    s.valid = false;
  }
  return s;
}

struct ShellSample {
  bool feasible = false;
  int shell = 0;
  Point x;
  double q = 0.0;
};

/// Shell sample i lies on shell i mod K at nominal radius r0 2^-k; every other
/// one is pulled onto the zero set of a random active constraint.
inline ShellSample shell_sample(const Problem& pr, const Point& xbar, const Vec& fbar, const IndexSet& active,
                                std::size_t i, std::uint64_t seed) {
  ShellSample s;
  const int K = pr.oracle.shells;
  s.shell = static_cast<int>(i % static_cast<std::size_t>(K));
  const double r = pr.oracle.r0 * std::ldexp(1.0, -s.shell);
  Rng rng(split_seed(seed, i));
  Point y = xbar + r * rng.unit(pr.n);
  try {
    if (i % 2 == 1 && !active.empty()) {
      const Expr& g = pr.g[active[rng.below(active.size())]];
      const auto proj = project_level(g, y);
      if (!proj) return s;
      const Vec dir = *proj - xbar;
      if (!(dir.norm() > 0.0)) return s;
      y = xbar + (r / dir.norm()) * dir;
      // Rescaling leaves a curved zero set; project once more if that stays near the shell.
      const auto again = project_level(g, y);
      if (again && std::fabs((*again - xbar).norm() - r) < 0.5 * r) y = *again;
    }
    if (!pr.box.contains(y) || !strictly_feasible(pr, y)) return s;
    const double dist2 = (y - xbar).squaredNorm();
    if (!(dist2 > 0.0)) return s;
    const Vec fy = pr.objectives(y);
    s.q = (fy - fbar).maxCoeff() / dist2;
    s.x = y;
    s.feasible = true;
  } catch (const DomainError&) {
  } catch (const KinkError&) {
  }
  return s;
}

inline OracleVerdict order2(const Problem& pr, const Point& xbar, const OracleRun& run) {
  OracleVerdict v;
  v.kind = OracleKind::StrictLocalOrder2;
  v.base_values = pr.objectives(xbar);
  const IndexSet active = active_constraints(pr, xbar, pr.tol);
  const std::size_t N = pr.oracle.n_samples;
  std::vector<ShellSample> samples(N);
  parallel_for(N, run.threads, [&](std::size_t i) {
    samples[i] = shell_sample(pr, xbar, v.base_values, active, i, run.seed);
  });
  const int K = pr.oracle.shells;
  v.samples = N;
  v.shell_min_q.assign(static_cast<std::size_t>(K), std::numeric_limits<double>::infinity());
  std::optional<std::size_t> worst_small;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& s = samples[i];
    if (!s.feasible) continue;
    ++v.feasible;
    double& m = v.shell_min_q[static_cast<std::size_t>(s.shell)];
    m = std::min(m, s.q);
    if (s.shell >= K - 2 && (!worst_small || s.q < samples[*worst_small].q)) worst_small = i;
  }
  if (v.feasible == 0) {
    v.status = OracleVerdict::Status::Inconclusive;
    v.reason = "no feasible shell samples";
    return v;
  }
  double min_q = std::numeric_limits<double>::infinity();
  for (double m : v.shell_min_q) min_q = std::min(min_q, m);
  v.margin = min_q;
  const double alpha = pr.oracle.alpha_min;
  if (worst_small && samples[*worst_small].q < alpha * 1e-2) {
    v.status = OracleVerdict::Status::Falsified;
    v.witness = samples[*worst_small].x;
    v.witness_values = pr.objectives(*v.witness);
    v.reason = "q = max_j (f_j(x) - f_j(xbar)) / |x - xbar|^2 falls below alpha_min/100 on the smallest shells";
  } else if (min_q >= alpha && std::all_of(v.shell_min_q.begin(), v.shell_min_q.end(),
                                           [](double m) { return std::isfinite(m); })) {
    v.status = OracleVerdict::Status::Supported;
    v.reason = "q >= alpha_min on every shell";
  } else {
    v.status = OracleVerdict::Status::Inconclusive;
    v.reason = std::isfinite(min_q) && min_q < alpha ? "q dips below alpha_min away from the smallest shells"
                                                     : "some shells have no feasible samples";
  }
  return v;
}

}  // namespace detail

/// Brute-force check of one efficiency notion at xbar.
inline OracleVerdict check_efficiency(const Problem& pr, const Point& xbar, OracleKind kind, const OracleRun& run = {}) {
  pr.validate();
  require_point(xbar, pr.n);
  active_constraints(pr, xbar, pr.tol);
  if (kind == OracleKind::StrictLocalOrder2) return detail::order2(pr, xbar, run);

  OracleVerdict v;
  v.kind = kind;
  v.base_values = pr.objectives(xbar);
  const std::size_t N = pr.oracle.n_samples;
  std::vector<detail::GlobalSample> samples(N);
  parallel_for(N, run.threads, [&](std::size_t i) { samples[i] = detail::global_sample(pr, i, run.seed); });
  v.samples = N;
  std::optional<std::size_t> best;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < N; ++i) {
    const auto& s = samples[i];
    if (!s.valid || !s.feasible) continue;
    ++v.feasible;
    margin = std::min(margin, (s.fx - v.base_values).maxCoeff());
    if (!recheck_oracle_witness(pr, xbar, kind, s.x)) continue;
    if (!best || (s.x - xbar).norm() < (samples[*best].x - xbar).norm()) best = i;
  }
  if (v.feasible == 0) {
    v.status = OracleVerdict::Status::Inconclusive;
    v.reason = "no feasible samples in the box";
    return v;
  }
  v.margin = margin;
  if (best) {
    v.status = OracleVerdict::Status::Falsified;
    v.witness = samples[*best].x;
    v.witness_values = samples[*best].fx;
    v.reason = std::string("feasible point dominating xbar in the ") + to_string(kind) + " sense";
  } else {
    v.status = OracleVerdict::Status::Supported;
    v.reason = "no dominating point among " + std::to_string(v.feasible) + " feasible samples";
  }
  return v;
}

/// min q over the order-2 shell samples; may be <= 0.
inline double alpha_estimate(const Problem& pr, const Point& xbar, const OracleRun& run = {}) {
  const OracleVerdict v = check_efficiency(pr, xbar, OracleKind::StrictLocalOrder2, run);
  if (!v.margin) throw Inconclusive(v.reason);
  return *v.margin;
}

// ---------------------------------------------------------------------------
// Random instances and the cross-validation harness.

enum class ProblemClass { ConvexQuadratic, Polynomial };

inline const char* to_string(ProblemClass c) {
  return c == ProblemClass::ConvexQuadratic ? "convex-quadratic" : "polynomial";
}

inline ProblemClass parse_problem_class(const std::string& s) {
  if (s == "convex-quadratic") return ProblemClass::ConvexQuadratic;
  if (s == "polynomial") return ProblemClass::Polynomial;
  throw InputError("unknown problem class '" + s + "' (expected convex-quadratic or polynomial)");
}

struct Instance {
  Problem problem;
  Point anchor;
};

namespace detail {

inline std::string num(double v) {
  const std::string s = format_double(v);
  return v < 0 || std::signbit(v) ? "(" + s + ")" : s;
}

inline std::string var(int k) { return "x" + std::to_string(k + 1); }

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

/// Minimizer of 1/2 x'Hx - h'x over Ax <= b by active-set enumeration (m <= 3).
inline std::optional<Vec> qp_minimize(const Mat& H, const Vec& h, const Mat& A, const Vec& b) {
  const auto n = H.rows();
  const auto m = A.rows();
  std::optional<Vec> best;
  double best_val = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> S;
    for (Eigen::Index i = 0; i < m; ++i)
      if (mask & (1u << i)) S.push_back(i);
    const auto k = static_cast<Eigen::Index>(S.size());
    if (k > n) continue;
    Mat K = Mat::Zero(n + k, n + k);
    Vec rhs(n + k);
    K.topLeftCorner(n, n) = H;
    rhs.head(n) = h;
    for (Eigen::Index r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = A.row(S[static_cast<std::size_t>(r)]);
      K.block(0, n + r, n, 1) = A.row(S[static_cast<std::size_t>(r)]).transpose();
      rhs[n + r] = b[S[static_cast<std::size_t>(r)]];
    }
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);
    if (k > 0 && sol.tail(k).minCoeff() < -1e-12) continue;
    if (m > 0 && (A * x - b).maxCoeff() > 1e-12) continue;
    const double val = 0.5 * x.dot(H * x) - h.dot(x);
    if (val < best_val) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

inline std::optional<Instance> convex_quadratic(Rng& rng) {
  const int n = 1 + static_cast<int>(rng.below(3));
  const int p = 1 + static_cast<int>(rng.below(3));
  const int m = static_cast<int>(rng.below(4));
  std::vector<std::string> obj, con;
  Mat H = Mat::Zero(n, n);
  Vec h = Vec::Zero(n);
  Vec w(p);
  for (int j = 0; j < p; ++j) w[j] = rng.uniform(0.1, 1.0);
  w /= w.sum();
  for (int j = 0; j < p; ++j) {
    Mat M(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) M(a, b) = round4(0.7 * rng.normal());
    Mat Q = M.transpose() * M + 0.1 * Mat::Identity(n, n);
    Vec c(n);
    for (int a = 0; a < n; ++a) c[a] = round4(rng.uniform(-1.5, 1.5));
    std::string text;
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        const double coef = a == b ? Q(a, a) : 2.0 * Q(a, b);
        if (!text.empty()) text += " + ";
        text += num(coef) + "*(" + var(a) + " - " + num(c[a]) + ")*(" + var(b) + " - " + num(c[b]) + ")";
      }
    obj.push_back(text);
    H += 2.0 * w[j] * Q;
    h += 2.0 * w[j] * Q * c;
  }
  Mat A(m, n);
  Vec b(m);
  for (int i = 0; i < m; ++i) {
    Vec z(n);
    for (int a = 0; a < n; ++a) {
      A(i, a) = round4(rng.normal());
      z[a] = rng.uniform(-1.0, 1.0);
    }
    b[i] = round4(A.row(i).dot(z) + rng.uniform(0.0, 0.5));
    std::string text;
    for (int a = 0; a < n; ++a) text += (a ? " + " : "") + num(A(i, a)) + "*" + var(a);
    con.push_back(text + " - " + num(b[i]));
  }
  const auto x = qp_minimize(H, h, A, b);
  if (!x || x->cwiseAbs().maxCoeff() > 2.5) return std::nullopt;
  return Instance{Problem::make(n, obj, con, Box::cube(static_cast<std::size_t>(n), 3.0)), *x};
}

inline std::optional<Instance> polynomial(Rng& rng) {
  const int n = 1 + static_cast<int>(rng.below(3));
  const int p = 1 + static_cast<int>(rng.below(3));
  const int m = static_cast<int>(rng.below(4));
  Point anchor(n);
  for (int a = 0; a < n; ++a) anchor[a] = round4(rng.uniform(-1.0, 1.0));
  auto poly = [&]() {
    std::string text;
    const int terms = 1 + static_cast<int>(rng.below(4));
    for (int t = 0; t < terms; ++t) {
      std::string mono = num(round4(rng.uniform(-2.0, 2.0)));
      int degree = 1 + static_cast<int>(rng.below(4));
      while (degree > 0) {
        const int e = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(degree)));
        mono += "*" + var(static_cast<int>(rng.below(static_cast<std::size_t>(n)))) + (e > 1 ? "^" + std::to_string(e) : "");
        degree -= e;
      }
      text += (t ? " + " : "") + mono;
    }
    return text;
  };
  std::vector<std::string> obj, con;
  for (int j = 0; j < p; ++j) obj.push_back(poly());
  for (int i = 0; i < m; ++i) {
    const std::string body = poly();
    const double at = Expr::parse(body, n).eval(anchor);
    const double slack = rng.uniform() < 0.5 ? 0.0 : round4(rng.uniform(0.0, 0.5));
    con.push_back(body + " - " + num(at + slack));
  }
  Instance inst{Problem::make(n, obj, con, Box::cube(static_cast<std::size_t>(n), 2.0)), anchor};
  if (!inst.problem.feasible(anchor)) return std::nullopt;
  return inst;
}

}  // namespace detail

/// Deterministic in (seed, class); retries with derived seeds until the
/// generated anchor is usable.
inline Instance random_problem(std::uint64_t seed, ProblemClass cls) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(split_seed(seed, attempt));
    auto inst = cls == ProblemClass::ConvexQuadratic ? detail::convex_quadratic(rng) : detail::polynomial(rng);
    if (inst) return std::move(*inst);
  }
}

/// The one-dimensional problem min -x^3 s.t. -x^3 + x^2 <= 0 with eta(y, x) = y.
inline Problem santos_gap_problem() {
  Problem pr = Problem::make(1, {"-(x1^3)"}, {"-(x1^3) + x1^2"}, Box::cube(1, 2.0));
  pr.eta = std::vector<std::string>{"y1"};
  return pr;
}

inline OracleKind oracle_for(Theorem t) {
  switch (t) {
    case Theorem::LocalOrder2: return OracleKind::StrictLocalOrder2;
    case Theorem::GlobalWeakKKT: return OracleKind::GlobalWeak;
    default: return OracleKind::StrictGlobal;
  }
}

struct HarnessCase {
  std::string instance;  ///< "seed:<n>" or "santos-gap"
  Theorem theorem = Theorem::LocalOrder2;
  Certificate::Verdict verdict = Certificate::Verdict::Inconclusive;
  std::optional<OracleVerdict> oracle;
  bool violation = false;
  bool intentional = false;
};

struct HarnessReport {
  std::size_t instances = 0;
  std::uint64_t seed = 0;
  ProblemClass cls = ProblemClass::ConvexQuadratic;
  std::vector<HarnessCase> cases;
  std::size_t certified = 0;
  std::size_t oracle_checked = 0;
  std::size_t violations = 0;
  std::size_t intentional_violations = 0;
};

struct HarnessConfig {
  CertifyConfig certify;
  OracleRun oracle;
  bool santos_gap = false;
};

namespace detail {

inline HarnessCase run_case(const Problem& pr, const Point& x, Theorem t, const CertifyConfig& ccfg,
                            const OracleRun& orun, std::string label) {
  HarnessCase hc;
  hc.instance = std::move(label);
  hc.theorem = t;
  const Certificate cert = certify(pr, x, t, ccfg);
  hc.verdict = cert.verdict;
  bool hyps_clean = true;
  for (const auto& h : cert.hypotheses)
    hyps_clean = hyps_clean && h.report.status == FalsifyReport::Status::NotFalsified;
  if (cert.certified() && hyps_clean) {
    hc.oracle = check_efficiency(pr, x, oracle_for(t), orun);
    hc.violation = hc.oracle->falsified();
  }
  return hc;
}

}  // namespace detail

/// Certifies every generated instance under every theorem and runs the
/// matching oracle on each certified case. A certified case the oracle
/// falsifies is a soundness violation.
inline HarnessReport cross_validate(std::size_t n_instances, std::uint64_t seed, ProblemClass cls,
                                    const HarnessConfig& cfg = {}) {
  HarnessReport rep;
  rep.instances = n_instances;
  rep.seed = seed;
  rep.cls = cls;
  const Theorem all[] = {Theorem::LocalOrder2, Theorem::GlobalWeakKKT, Theorem::GlobalStrictKKT,
                         Theorem::GlobalStrictFJ, Theorem::GlobalStrictQuasiconvex};
  for (std::size_t k = 0; k < n_instances; ++k) {
    const std::uint64_t s = split_seed(seed, k);
    const Instance inst = random_problem(s, cls);
    for (Theorem t : all)
      rep.cases.push_back(detail::run_case(inst.problem, inst.anchor, t, cfg.certify, cfg.oracle,
                                           "seed:" + std::to_string(s)));
  }
  if (cfg.santos_gap) {
    CertifyConfig gap = cfg.certify;
    gap.assume_quasiinvex = true;
    HarnessCase hc = detail::run_case(santos_gap_problem(), Point::Zero(1), Theorem::GlobalStrictQuasiconvex, gap,
                                      cfg.oracle, "santos-gap");
    hc.intentional = true;
    rep.cases.push_back(std::move(hc));
  }
  for (const auto& c : rep.cases) {
    if (c.verdict == Certificate::Verdict::CertifiedOnSamples) ++rep.certified;
    if (c.oracle) ++rep.oracle_checked;
    if (c.violation) ++(c.intentional ? rep.intentional_violations : rep.violations);
  }
  return rep;
}

}  // namespace dpcert
