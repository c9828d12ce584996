// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "dpcert/certify.hpp"
#include "dpcert/deriv.hpp"
#include "dpcert/gencvx.hpp"
#include "dpcert/io.hpp"
#include "dpcert/oracle.hpp"

using namespace dpcert;

namespace {

class Criterion {
 public:
  explicit Criterion(std::string title) : title_(std::move(title)) {}

  void check(bool ok, const std::string& what) {
    ok_ = ok_ && ok;
    notes_ << "    [" << (ok ? "ok" : "FAILED") << "] " << what << "\n";
  }
  void note(const std::string& what) { notes_ << "    note: " << what << "\n"; }

  bool report(int index) const {
    std::cout << (ok_ ? "PASS" : "FAIL") << " " << index << " " << title_ << "\n" << notes_.str();
    return ok_;
  }

 private:
  std::string title_;
  bool ok_ = true;
  std::ostringstream notes_;
};

std::string fx(const std::string& name) { return std::string(DPCERT_FIXTURE_DIR) + "/" + name; }

Point pt(std::initializer_list<double> v) {
  Point x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double c : v) x[i++] = c;
  return x;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

std::string vec(const Vec& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + ")";
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

/// Captures stdout of a shell command and its exit status.
std::pair<int, std::string> capture(const std::string& cmd) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, out};
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

bool criterion1() {
  Criterion c("ex1 fixture: local2 certificate with FJ multipliers and cone condition");
  const Problem pr = io::load_problem(fx("ex1.json"));
  CertifyConfig cfg;
  cfg.dirs = 256;
  cfg.seed = 7;
  const Certificate cert = certify(pr, pt({0, 0}), Theorem::LocalOrder2, cfg);
  c.check(cert.certified(), std::string("verdict ") + to_string(cert.verdict) + ": " + cert.reason);
  std::size_t sampled = 0, on_axis = 0, axis_ok = 0;
  bool all_cone = true;
  std::string first_axis;
  for (const auto& r : cert.records) {
    if (r.d.norm() == 0.0) continue;
    ++sampled;
    all_cone = all_cone && r.cone_condition.value_or(false);
    const Vec u = r.d / r.d.norm();
    if (!near(u[0], -1.0, 1e-12) || !near(u[1], 0.0, 1e-12)) continue;
    ++on_axis;
    if (!r.multipliers) continue;
    const auto& m = *r.multipliers;
    const bool ok = near(m.mu[0], 0.5, 1e-6) && near(m.mu[1], 0.0, 1e-6) && near(m.lambda[0], 0.5, 1e-6) &&
                    near(m.slack, 1.0, 1e-6);
    axis_ok += ok ? 1 : 0;
    if (first_axis.empty() || !ok)
      first_axis = "mu=" + vec(m.mu) + " lambda=" + vec(m.lambda) + " slack=" + num(m.slack);
  }
  c.check(on_axis > 0 && axis_ok == on_axis, std::to_string(axis_ok) + "/" + std::to_string(on_axis) +
                                                 " records at d=(-1,0) with " + first_axis);
  c.check(sampled >= 256, std::to_string(sampled) + " sampled directions");
  c.check(all_cone, "cone condition trivially satisfied for every sampled d");
  return c.report(1);
}

bool criterion2() {
  Criterion c("derivative fixtures");
  const DerivConfig cfg;
  const Expr g = Expr::parse("x1^2 - x2", 2);
  const Expr f1 = Expr::parse("if x1 != 0 then x1^(7/3)*sin(1/x1) + x2 else x2", 2);
  const Expr phi = Expr::parse("if x1 >= 0 then x1^2 else -(x1^2)", 1);
  const Point o = pt({0, 0});
  const Vec d = pt({-1, 0});

  const auto gd = second_dp(g, o, d, cfg);
  c.check(gd.finite() && near(gd.value(), 2.0, 1e-6), "g''((0,0);(-1,0)) = " + (gd.finite() ? num(gd.value()) : gd.kind()));
  const auto fd = second_dp(f1, o, d, cfg);
  c.check(fd.finite() && near(fd.value(), 0.0, 1e-3) && fd.as_finite().path == LimitPath::Envelope,
          "f1''((0,0);(-1,0)) = " + (fd.finite() ? num(fd.value()) + " via " + to_string(fd.as_finite().path) : fd.kind()));
  const auto pd = second_dp(phi, pt({0}), pt({-1}), cfg);
  c.check(pd.finite() && near(pd.value(), -2.0, 1e-6), "piecewise phi''(0;-1) = " + (pd.finite() ? num(pd.value()) : pd.kind()));
  const auto hd = hadamard_second_estimate(f1, o, d, cfg);
  c.check(std::holds_alternative<NoLimit>(hd.outcome), "Hadamard estimate on f1: " + hd.kind());
  DerivConfig deep = cfg;
  deep.max_steps = 80;
  const auto hdeep = hadamard_second_estimate(f1, o, d, deep);
  c.note("with 80 halvings the Hadamard estimate on f1 is " + hdeep.kind() +
         (hdeep.finite() ? " " + num(hdeep.value()) : std::string()) +
         "; its perturbed quotients are bounded by 2 t^(1/3) |u1|^(7/3)");
  const auto st = gradient_stability_estimate(f1, o, cfg);
  c.check(!st.bounded, std::string("gradient stability of f1: bounded=") + (st.bounded ? "true" : "false"));
  return c.report(2);
}

bool criterion3() {
  Criterion c("LVP: kkt-weak certificate, oracles, falsifier, local2 rejection");
  const Problem pr = io::load_problem(fx("lvp.json"));
  const Point o = pt({0, 0});
  CertifyConfig cfg;
  const Certificate kkt = certify(pr, o, Theorem::GlobalWeakKKT, cfg);
  c.check(kkt.certified(), std::string("kkt-weak: ") + to_string(kkt.verdict) + ": " + kkt.reason);
  bool match = false;
  for (const auto& r : kkt.records) {
    if (!r.multipliers) continue;
    const auto& m = *r.multipliers;
    const double s = m.mu[1];
    if (s > 0 && near(m.mu[0], 0.0, 1e-9) && near(m.lambda[0] / s, 1.0, 1e-6)) {
      if (!match) c.note("record " + std::to_string(r.index) + ": mu=" + vec(m.mu) + " lambda=" + vec(m.lambda));
      match = true;
    }
  }
  c.check(match, "a record with multipliers proportional to mu=(0,1), lambda=1");

  const auto weak = check_efficiency(pr, o, OracleKind::GlobalWeak);
  c.check(weak.status == OracleVerdict::Status::Supported && weak.samples == 10000,
          std::string("oracle weak: ") + to_string(weak.status) + " over " + std::to_string(weak.samples) + " samples");
  const auto strict = check_efficiency(pr, o, OracleKind::StrictGlobal);
  const bool strict_ok = strict.falsified() && recheck_oracle_witness(pr, o, OracleKind::StrictGlobal, *strict.witness);
  c.check(strict_ok, std::string("oracle strict-global: ") + to_string(strict.status) +
                         (strict.witness ? " witness " + vec(*strict.witness) : std::string()));

  FalsifyConfig fc;
  fc.box = pr.box;
  const Property s2pc{PropertyKind::StrictlyTwoPseudoconvex, {}};
  const auto rep = falsify(pr.f[0], o, s2pc, fc);
  const bool rechecked = rep.witness && recheck_witness(pr.f[0], o, s2pc, *rep.witness, pr.tol, pr.deriv);
  c.check(rep.falsified() && rechecked, std::string("strictly-2-pseudoconvex on f1: ") + to_string(rep.status) +
                                            (rep.witness ? " witness " + vec(rep.witness->y) : std::string()));

  const Certificate local = certify(pr, o, Theorem::LocalOrder2, cfg);
  c.check(local.verdict == Certificate::Verdict::NotCertified, std::string("local2: ") + to_string(local.verdict));
  return c.report(3);
}

bool criterion4() {
  Criterion c("counter-example: quasiconvexity of g fails, x=0 not weakly efficient, santos-gap demo");
  const Problem pr = io::load_problem(fx("counterexample.json"));
  const Point o = pt({0});
  FalsifyConfig fc;
  fc.box = pr.box;
  fc.n_samples = 1000;
  const Property qc{PropertyKind::Quasiconvex, {}};
  const auto rep = falsify(pr.g[0], o, qc, fc);
  bool witness_ok = false;
  if (rep.witness && rep.witness->t) {
    const double t = *rep.witness->t;
    const double y = rep.witness->y[0];
    const double gt = pr.g[0].eval(pt({t * y}));
    witness_ok = gt > 0.0 && recheck_witness(pr.g[0], o, qc, *rep.witness, pr.tol, pr.deriv);
    c.note("witness y=" + num(y) + " t=" + num(t) + " g(x+t(y-x))=" + num(gt));
  }
  c.check(rep.falsified() && rep.samples_used <= 1000 && witness_ok,
          std::string("quasiconvex on g: ") + to_string(rep.status) + " after " + std::to_string(rep.samples_used) +
              " samples");

  const auto weak = check_efficiency(pr, o, OracleKind::GlobalWeak);
  const bool weak_ok = weak.falsified() && near((*weak.witness)[0], 1.0, 1e-9) && weak.witness_values[0] <= -1.0 + 1e-9;
  c.check(weak_ok, std::string("oracle weak: ") + to_string(weak.status) +
                       (weak.witness ? " witness " + vec(*weak.witness) + " f=" + vec(weak.witness_values) : std::string()));

  const Certificate cert = certify(pr, o, Theorem::GlobalStrictQuasiconvex);
  c.check(cert.verdict == Certificate::Verdict::NotCertified && cert.failing_hypothesis.has_value(),
          std::string("qc-strict: ") + to_string(cert.verdict) + ": " + cert.reason);

  HarnessConfig hc;
  hc.santos_gap = true;
  const auto gap = cross_validate(0, 0, ProblemClass::ConvexQuadratic, hc);
  c.check(gap.intentional_violations == 1 && gap.violations == 0,
          "santos-gap demo: " + std::to_string(gap.intentional_violations) + " intentional, " +
              std::to_string(gap.violations) + " unintentional violations");
  return c.report(4);
}

bool criterion5() {
  Criterion c("property suites");
  const std::vector<std::pair<std::string, std::string>> suites = {
      {DPCERT_TEST_DERIV, "DerivProperty.DegreeTwoHomogeneity:DerivProperty.TaylorRemainderVanishes"},
      {DPCERT_TEST_EXPR, "ExprProperty.AdAgreesWithFiniteDifferences"},
      {DPCERT_TEST_LP, "LpProperty.SolveMatchesVertexEnumeration"},
      {DPCERT_TEST_CONES, "ConesProperty.TrivialityAgreesWithSphereSampling"},
      {DPCERT_TEST_CERTIFY, "CertifyProperty.VerdictsInvariantUnderPositiveScaling"},
  };
  for (const auto& [binary, filter] : suites) {
    const auto [code, out] = capture("'" + binary + "' --gtest_filter='" + filter + "' 2>&1");
    const bool ran = out.find("[  PASSED  ]") != std::string::npos;
    c.check(code == 0 && ran, filter);
  }
  return c.report(5);
}

bool criterion6() {
  Criterion c("soundness harness on 50 convex-quadratic instances");
  HarnessConfig hc;
  hc.certify.seed = 2024;
  hc.oracle.seed = 2024;
  const auto rep = cross_validate(50, 2024, ProblemClass::ConvexQuadratic, hc);
  c.note(std::to_string(rep.cases.size()) + " cases, " + std::to_string(rep.certified) + " certified, " +
         std::to_string(rep.oracle_checked) + " oracle-checked");
  c.check(rep.instances == 50 && rep.violations == 0,
          std::to_string(rep.violations) + " (certified, oracle-falsified) pairs");
  return c.report(6);
}

bool criterion7() {
  Criterion c("CLI reports are byte-identical across runs and thread counts");
  const std::string bin = std::string("'") + DPCERT_CLI + "'";
  const std::vector<std::string> commands = {
      "certify --problem '" + fx("ex1.json") + "' --point 0,0 --theorem local2 --dirs 256 --seed 7",
      "certify --problem '" + fx("lvp.json") + "' --point 0,0 --theorem kkt-weak --seed 1",
      "certify --problem '" + fx("counterexample.json") + "' --point 0 --theorem qc-strict --seed 1",
      "oracle --problem '" + fx("counterexample.json") + "' --point 0 --kind weak --seed 3",
      "oracle --problem '" + fx("ex1.json") + "' --point 0,0 --kind local2 --seed 3",
      "falsify --problem '" + fx("lvp.json") + "' --point 0,0 --property strictly-2-pseudoconvex:objective:1 --seed 4",
      "deriv --problem '" + fx("ex1.json") + "' --point 0,0 --function objective:1 --direction -1,0",
      "harness --instances 3 --santos-gap --seed 5",
  };
  for (const auto& cmd : commands) {
    const auto a = capture(bin + " " + cmd + " --threads 1");
    const auto b = capture(bin + " " + cmd + " --threads 1");
    const auto d = capture(bin + " " + cmd + " --threads 4");
    const bool ok = a.first >= 0 && a.first <= 2 && !a.second.empty() && a.second == b.second && a.second == d.second;
    c.check(ok, cmd.substr(0, cmd.find(' ')) + " (exit " + std::to_string(a.first) + ", " +
                    std::to_string(a.second.size()) + " bytes)");
  }
  return c.report(7);
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);
  int failed = 0;
  bool (*const criteria[])() = {criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7};
  for (auto* run : criteria) {
    try {
      failed += run() ? 0 : 1;
    } catch (const std::exception& e) {
      std::cout << "FAIL (exception) " << e.what() << "\n";
      ++failed;
    }
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
