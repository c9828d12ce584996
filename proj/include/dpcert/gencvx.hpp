#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "dpcert/deriv.hpp"
#include "dpcert/errors.hpp"
#include "dpcert/expr.hpp"
#include "dpcert/parallel.hpp"
#include "dpcert/problem.hpp"
#include "dpcert/rng.hpp"

namespace dpcert {

enum class PropertyKind { Quasiconvex, Pseudoconvex, TwoPseudoconvex, StrictlyTwoPseudoconvex, Quasiinvex };

inline const char* to_string(PropertyKind k) {
  switch (k) {
    case PropertyKind::Quasiconvex: return "quasiconvex";
    case PropertyKind::Pseudoconvex: return "pseudoconvex";
    case PropertyKind::TwoPseudoconvex: return "2-pseudoconvex";
    case PropertyKind::StrictlyTwoPseudoconvex: return "strictly-2-pseudoconvex";
    case PropertyKind::Quasiinvex: return "quasiinvex";
  }
  return "?";
}

inline PropertyKind parse_property_kind(const std::string& s) {
  for (auto k : {PropertyKind::Quasiconvex, PropertyKind::Pseudoconvex, PropertyKind::TwoPseudoconvex,
                 PropertyKind::StrictlyTwoPseudoconvex, PropertyKind::Quasiinvex})
    if (s == to_string(k)) return k;
  throw InputError("unknown property '" + s + "'");
}

/// A generalized-convexity property; quasiinvexity carries eta as n
/// expressions in y1..yn that may mention the base point through x1..xn.
struct Property {
  PropertyKind kind = PropertyKind::Quasiconvex;
  std::vector<std::string> eta;
};

struct Witness {
  Point y;
  std::optional<double> t;
  double phi_y = 0.0;
  double phi_bar = 0.0;
  std::optional<double> phi_t;
  std::optional<double> inner;
  std::optional<double> second;
};

struct FalsifyReport {
  enum class Status { Falsified, NotFalsified, Inconclusive };
  Status status = Status::NotFalsified;
  PropertyKind kind = PropertyKind::Quasiconvex;
  std::optional<Witness> witness;
  std::string clause;
  std::string reason;
  std::size_t samples_used = 0;
  std::size_t antecedent_hits = 0;
  std::size_t skipped = 0;
  std::size_t undecided = 0;

  bool falsified() const { return status == Status::Falsified; }
};

inline const char* to_string(FalsifyReport::Status s) {
  switch (s) {
    case FalsifyReport::Status::Falsified: return "falsified";
    case FalsifyReport::Status::NotFalsified: return "not-falsified";
    case FalsifyReport::Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct FalsifyConfig {
  Box box;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  Tolerances tol;
  DerivConfig deriv;
  int t_grid = 16;
  unsigned threads = 1;
};

namespace detail {

/// Replaces x<i> by the coordinates of xbar and parses the result in y1..yn.
inline std::vector<Expr> bind_eta(const std::vector<std::string>& eta, const Point& xbar) {
  const auto n = static_cast<int>(xbar.size());
  if (eta.size() != static_cast<std::size_t>(n))
    throw InputError("eta must list one expression per variable");
  static const std::regex var(R"(\bx(\d+))");
  std::vector<Expr> out;
  for (const std::string& text : eta) {
    std::string bound;
    auto it = std::sregex_iterator(text.begin(), text.end(), var);
    std::size_t last = 0;
    for (; it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const int idx = std::stoi(m[1].str());
      if (idx < 1 || idx > n) throw InputError("eta refers to x" + m[1].str() + " outside 1.." + std::to_string(n));
      bound += text.substr(last, static_cast<std::size_t>(m.position()) - last);
      bound += "(" + format_double(xbar[idx - 1]) + ")";
      last = static_cast<std::size_t>(m.position() + m.length());
    }
    bound += text.substr(last);
    out.push_back(Expr::parse(bound, n, 'y'));
  }
  return out;
}

enum class SampleKind { Skipped, Vacuous, Holds, Undecided, Violated };

struct SampleOutcome {
  SampleKind kind = SampleKind::Vacuous;
  Witness witness;
  std::string clause;
};

struct FalsifyContext {
  const Expr& phi;
  const Point& xbar;
  PropertyKind kind;
  std::vector<Expr> eta;
  const Tolerances& tol;
  const DerivConfig& deriv;
  int t_grid;
  double phi_bar;
  Vec grad_bar;
};

inline SampleOutcome evaluate_sample(const FalsifyContext& c, const Point& y, std::optional<double> t_only) {
  SampleOutcome out;
  const double s0 = 1.0 + std::fabs(c.phi_bar);
  const Vec dy = y - c.xbar;
  const double dn = dy.norm();
  out.witness.y = y;
  out.witness.phi_bar = c.phi_bar;
  try {
    const double phi_y = c.phi.eval(y);
    out.witness.phi_y = phi_y;
    const double gnorm = c.grad_bar.norm();
    const double ip = c.grad_bar.dot(dy);
    const double zero_band = c.tol.eps_zero * gnorm * dn;

    auto second_clause = [&](const char* clause) {
      if (std::fabs(ip) > zero_band) return;
      const DirDeriv2Result r = second_dp(c.phi, c.xbar, dy, c.deriv);
      if (!r.finite()) {
        out.kind = SampleKind::Undecided;
        return;
      }
      out.witness.second = r.value();
      if (r.value() > -c.tol.tau_strict) {
        out.kind = SampleKind::Violated;
        out.clause = clause;
      }
    };

    switch (c.kind) {
      case PropertyKind::Quasiconvex: {
        if (dn == 0.0 || phi_y > c.phi_bar) return out;
        out.kind = SampleKind::Holds;
        double worst = 0.0;
        auto probe = [&](double t) {
          const double v = c.phi.eval(c.xbar + t * dy);
          const double excess = v - c.phi_bar - c.tol.tau_strict * s0;
          if (excess > worst) {
            worst = excess;
            out.kind = SampleKind::Violated;
            out.witness.t = t;
            out.witness.phi_t = v;
            out.clause = "phi(y) <= phi(xbar) but phi(xbar + t(y - xbar)) > phi(xbar)";
          }
        };
        if (t_only) {
          if (!(*t_only > 0.0 && *t_only < 1.0)) return out;
          probe(*t_only);
        } else {
          for (int k = 1; k < c.t_grid; ++k) probe(static_cast<double>(k) / c.t_grid);
        }
        return out;
      }
      case PropertyKind::Pseudoconvex: {
        if (!(phi_y < c.phi_bar - c.tol.tau_strict * s0)) return out;
        out.kind = SampleKind::Holds;
        out.witness.inner = ip;
        if (ip >= 0.0) {
          out.kind = SampleKind::Violated;
          out.clause = "phi(y) < phi(xbar) but <grad phi(xbar), y - xbar> >= 0";
        }
        return out;
      }
      case PropertyKind::TwoPseudoconvex:
      case PropertyKind::StrictlyTwoPseudoconvex: {
        const bool strict = c.kind == PropertyKind::StrictlyTwoPseudoconvex;
        const bool antecedent =
            strict ? (dn > 0.0 && phi_y <= c.phi_bar) : (phi_y < c.phi_bar - c.tol.tau_strict * s0);
        if (!antecedent) return out;
        out.kind = SampleKind::Holds;
        out.witness.inner = ip;
        if (ip > zero_band) {
          out.kind = SampleKind::Violated;
          out.clause = strict ? "phi(y) <= phi(xbar) but <grad phi(xbar), y - xbar> > 0"
                              : "phi(y) < phi(xbar) but <grad phi(xbar), y - xbar> > 0";
          return out;
        }
        second_clause(strict ? "phi(y) <= phi(xbar) and <grad phi(xbar), y - xbar> = 0 but phi''(xbar; y - xbar) >= 0"
                             : "phi(y) < phi(xbar) and <grad phi(xbar), y - xbar> = 0 but phi''(xbar; y - xbar) >= 0");
        return out;
      }
      case PropertyKind::Quasiinvex: {
        if (phi_y > c.phi_bar) return out;
        out.kind = SampleKind::Holds;
        Vec e(static_cast<Eigen::Index>(c.eta.size()));
        for (std::size_t i = 0; i < c.eta.size(); ++i) e[static_cast<Eigen::Index>(i)] = c.eta[i].eval(y);
        const double v = c.grad_bar.dot(e);
        out.witness.inner = v;
        if (v > c.tol.eps_zero * gnorm * e.norm()) {
          out.kind = SampleKind::Violated;
          out.clause = "phi(y) <= phi(xbar) but <grad phi(xbar), eta(y, xbar)> > 0";
        }
        return out;
      }
    }
  } catch (const DomainError&) {
    out.kind = SampleKind::Skipped;
  } catch (const KinkError&) {
    out.kind = SampleKind::Skipped;
  }
  return out;
}

inline FalsifyContext make_context(const Expr& phi, const Point& xbar, const Property& prop,
                                   const Tolerances& tol, const DerivConfig& deriv, int t_grid) {
  require_point(xbar, phi.dim(), "base point");
  FalsifyContext c{phi, xbar, prop.kind, {}, tol, deriv, t_grid, phi.eval(xbar), phi.grad(xbar)};
  if (prop.kind == PropertyKind::Quasiinvex) c.eta = bind_eta(prop.eta, xbar);
  return c;
}

/// Pulls y back along the segment from xbar until it lies in the box.
inline Point clamp_towards(const Point& xbar, Point y, const Box& box) {
  double s = 1.0;
  for (std::size_t i = 0; i < box.dim(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double delta = y[k] - xbar[k];
    if (y[k] > box.hi[i] && delta > 0) s = std::min(s, (box.hi[i] - xbar[k]) / delta);
    if (y[k] < box.lo[i] && delta < 0) s = std::min(s, (box.lo[i] - xbar[k]) / delta);
  }
  return xbar + s * (y - xbar);
}

/// Sample i: the first 2n are unit steps along +-e_k (clipped to the box);
/// the rest are uniform in the box, with every other one projected onto the
/// hyperplane through xbar orthogonal to grad phi for the second-order kinds.
inline Point falsify_sample(std::size_t i, const FalsifyContext& c, const Box& box, std::uint64_t seed) {
  const auto n = c.xbar.size();
  if (i < static_cast<std::size_t>(2 * n)) {
    const auto k = static_cast<Eigen::Index>(i / 2);
    const double sgn = i % 2 == 0 ? 1.0 : -1.0;
    return clamp_towards(c.xbar, c.xbar + sgn * Vec::Unit(n, k), box);
  }
  Rng rng(split_seed(seed, i));
  Point y(n);
  for (Eigen::Index k = 0; k < n; ++k)
    y[k] = rng.uniform(box.lo[static_cast<std::size_t>(k)], box.hi[static_cast<std::size_t>(k)]);
  const bool second_order =
      c.kind == PropertyKind::TwoPseudoconvex || c.kind == PropertyKind::StrictlyTwoPseudoconvex;
  const double g2 = c.grad_bar.squaredNorm();
  if (second_order && i % 2 == 1 && g2 > 0.0) {
    const Vec dy = y - c.xbar;
    y = clamp_towards(c.xbar, c.xbar + dy - (c.grad_bar.dot(dy) / g2) * c.grad_bar, box);
  }
  return y;
}

}  // namespace detail

/// Searches the box for a point violating the property at xbar. Samples are
/// processed in fixed chunks so the first violation by index, and hence the
/// report, does not depend on the thread count.
inline FalsifyReport falsify(const Expr& phi, const Point& xbar, const Property& prop, const FalsifyConfig& cfg) {
  cfg.box.validate(static_cast<std::size_t>(phi.dim()));
  cfg.tol.validate();
  cfg.deriv.validate();
  if (cfg.t_grid < 2) throw InputError("t_grid must be at least 2");
  const auto ctx = detail::make_context(phi, xbar, prop, cfg.tol, cfg.deriv, cfg.t_grid);
  if (!cfg.box.interior(xbar)) throw InputError("box must contain the base point in its interior");

  FalsifyReport rep;
  rep.kind = prop.kind;
  constexpr std::size_t kChunk = 64;
  std::vector<detail::SampleOutcome> outcomes;
  for (std::size_t start = 0; start < cfg.n_samples; start += kChunk) {
    const std::size_t len = std::min(kChunk, cfg.n_samples - start);
    outcomes.assign(len, {});
    parallel_for(len, cfg.threads, [&](std::size_t j) {
      const Point y = detail::falsify_sample(start + j, ctx, cfg.box, cfg.seed);
      outcomes[j] = detail::evaluate_sample(ctx, y, std::nullopt);
    });
    for (std::size_t j = 0; j < len; ++j) {
      const auto& o = outcomes[j];
      ++rep.samples_used;
      switch (o.kind) {
        case detail::SampleKind::Skipped: ++rep.skipped; break;
        case detail::SampleKind::Undecided: ++rep.undecided; ++rep.antecedent_hits; break;
        case detail::SampleKind::Holds: ++rep.antecedent_hits; break;
        case detail::SampleKind::Vacuous: break;
        case detail::SampleKind::Violated:
          ++rep.antecedent_hits;
          rep.status = FalsifyReport::Status::Falsified;
          rep.witness = o.witness;
          rep.clause = o.clause;
          return rep;
      }
    }
  }
  if (2 * rep.skipped > rep.samples_used) {
    rep.status = FalsifyReport::Status::Inconclusive;
    rep.reason = "more than half of the samples could not be evaluated";
    return rep;
  }
  rep.status = FalsifyReport::Status::NotFalsified;
  rep.reason = "no violation among " + std::to_string(rep.samples_used) +
               " samples of the box (evidence only on the box, not on the whole domain)";
  return rep;
}

/// Re-evaluates a witness from scratch; true iff the violation is confirmed.
inline bool recheck_witness(const Expr& phi, const Point& xbar, const Property& prop, const Witness& w,
                            const Tolerances& tol = {}, const DerivConfig& deriv = {}) {
  try {
    if (w.y.size() != phi.dim() || !w.y.allFinite()) return false;
    if (w.t && prop.kind != PropertyKind::Quasiconvex) return false;
    const auto ctx = detail::make_context(phi, xbar, prop, tol, deriv, 16);
    return detail::evaluate_sample(ctx, w.y, w.t).kind == detail::SampleKind::Violated;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace dpcert
