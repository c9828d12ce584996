#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dpcert/errors.hpp"
#include "dpcert/expr.hpp"
#include "dpcert/rng.hpp"

namespace dpcert {

/// Step schedule and tolerances for the t -> 0+ limits.
struct DerivConfig {
  double t0 = 1e-1;
  double rho = 0.5;
  int max_steps = 40;
  int window = 6;
  double tol_rel = 1e-6;
  double tol_abs = 1e-9;

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw InputError("deriv.rho must lie in (0, 1)");
    if (!(t0 > 0.0)) throw InputError("deriv.t0 must be positive");
    if (window < 3) throw InputError("deriv.window must be at least 3");
    if (max_steps < window) throw InputError("deriv.max_steps must be at least deriv.window");
    if (!(tol_rel >= 0.0) || !(tol_abs > 0.0)) throw InputError("deriv tolerances must be positive");
  }
  double tolerance(double at) const { return tol_abs + tol_rel * std::fabs(at); }
};

/// How a finite limit was recognised.
enum class LimitPath {
  Window,        ///< last raw quotients agree within tolerance
  Extrapolated,  ///< a Richardson column agrees within tolerance
  Envelope       ///< slow convergence enclosed by a shrinking envelope
};

inline const char* to_string(LimitPath p) {
  switch (p) {
    case LimitPath::Window: return "window";
    case LimitPath::Extrapolated: return "extrapolated";
    case LimitPath::Envelope: return "envelope";
  }
  return "?";
}

struct FiniteLimit {
  double value = 0.0;
  double uncertainty = 0.0;
  LimitPath path = LimitPath::Window;
};
struct DivergentLimit {
  int sign = 1;
};
struct NoLimit {
  double amplitude = 0.0;
  std::vector<double> trace;
};

/// Outcome of a numerical second-order directional limit.
struct DirDeriv2Result {
  std::variant<FiniteLimit, DivergentLimit, NoLimit> outcome;

  bool finite() const { return std::holds_alternative<FiniteLimit>(outcome); }
  const FiniteLimit& as_finite() const { return std::get<FiniteLimit>(outcome); }
  double value() const { return as_finite().value; }
  double uncertainty() const { return as_finite().uncertainty; }
  std::string kind() const {
    if (finite()) return "finite";
    if (std::holds_alternative<DivergentLimit>(outcome)) return "divergent";
    return "no-limit";
  }
};

/// Raw difference quotients on the geometric step grid, with a rounding-noise
/// estimate per step. `usable` counts the leading steps whose noise is small.
struct QuotientTrace {
  std::vector<double> t;
  std::vector<double> q;
  std::vector<double> noise;
  std::size_t usable = 0;
};

namespace detail {

constexpr double kEps = std::numeric_limits<double>::epsilon();

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline void mark_usable(QuotientTrace& tr, int window) {
  std::size_t usable = 0;
  while (usable < tr.q.size() &&
         tr.noise[usable] <= 1e-3 * std::max(1.0, std::fabs(tr.q[usable])))
    ++usable;
  tr.usable = std::max(usable, std::min(tr.q.size(), static_cast<std::size_t>(window) + 3));
}

/// Checks that well-resolved raw quotients after index `from` do not drift
/// away from `value` by more than the deviation already seen at `from`.
/// The noise estimate only sees the magnitudes of the end values, so steps
/// where it is not far below the signal are left out.
inline bool tail_consistent(const QuotientTrace& tr, std::size_t from, double value,
                            const DerivConfig& cfg) {
  const double base = std::fabs(tr.q[from] - value) + cfg.tolerance(value);
  for (std::size_t k = from + 1; k < tr.usable; ++k) {
    if (tr.noise[k] > 1e-5 * std::max(1.0, std::fabs(tr.q[k]))) break;
    if (std::fabs(tr.q[k] - value) > base + 4.0 * tr.noise[k]) return false;
  }
  return true;
}

/// Classifies the limit of a quotient sequence. `ratio` is the factor by which
/// the leading error term shrinks per step (rho for DP quotients, sqrt(rho)
/// when the error expands in powers of sqrt(t)).
inline DirDeriv2Result classify(const QuotientTrace& tr, const DerivConfig& cfg, double ratio) {
  const std::size_t n = tr.usable;
  const auto w = static_cast<std::size_t>(cfg.window);
  const std::vector<double> q(tr.q.begin(), tr.q.begin() + static_cast<std::ptrdiff_t>(n));

  auto window_stats = [&](const std::vector<double>& col, std::size_t start) {
    std::vector<double> win(col.begin() + static_cast<std::ptrdiff_t>(start),
                            col.begin() + static_cast<std::ptrdiff_t>(start + w));
    const auto [lo, hi] = std::minmax_element(win.begin(), win.end());
    return std::pair{median(win), *hi - *lo};
  };

  // Last raw window.
  if (n >= w) {
    const auto [med, spread] = window_stats(q, n - w);
    if (spread <= cfg.tolerance(med))
      return {FiniteLimit{med, spread, LimitPath::Window}};
  }

  // Richardson columns: best window anywhere, provided the later raw
  // quotients stay consistent with it.
  {
    std::vector<double> col = q;
    double best_score = std::numeric_limits<double>::infinity();
    std::optional<FiniteLimit> best;
    double factor = 1.0;
    for (int level = 0; level <= 3 && col.size() >= w; ++level) {
      for (std::size_t s = 0; s + w <= col.size(); ++s) {
        const auto [med, spread] = window_stats(col, s);
        const double tol = cfg.tolerance(med);
        if (spread > tol) continue;
        const std::size_t raw_end = s + w - 1 + static_cast<std::size_t>(level);
        if (!tail_consistent(tr, raw_end, med, cfg)) continue;
        const double score = spread / tol;
        if (score < best_score) {
          best_score = score;
          best = FiniteLimit{med, spread, level == 0 ? LimitPath::Window : LimitPath::Extrapolated};
        }
      }
      factor *= ratio;
      std::vector<double> next(col.size() - 1);
      for (std::size_t k = 0; k + 1 < col.size(); ++k)
        next[k] = (col[k + 1] - factor * col[k]) / (1.0 - factor);
      col = std::move(next);
    }
    if (best) return {*best};
  }

  // Envelope: tail maxima of |q - L| over trailing blocks must shrink.
  if (n >= 3 * w) {
    std::vector<double> last(q.end() - static_cast<std::ptrdiff_t>(w), q.end());
    const double L = median(last);
    double env[3];
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t start = n - (b + 1) * w;
      double m = 0.0;
      for (std::size_t k = start; k < n; ++k) m = std::max(m, std::fabs(q[k] - L));
      env[b] = m;
    }
    const bool shrinking = env[0] <= 0.8 * env[1] && env[1] <= 0.8 * env[2] && env[0] <= 0.5 * env[2];
    if (shrinking) {
      const double r = env[1] > 0 ? env[0] / env[1] : 0.0;
      return {FiniteLimit{L, env[0] / (1.0 - r), LimitPath::Envelope}};
    }
  }

  // Divergence: constant sign and strictly growing magnitude.
  if (n >= 2 * w) {
    const std::size_t start = n - 2 * w;
    const double s = q[n - 1] > 0 ? 1.0 : -1.0;
    bool growing = true;
    for (std::size_t k = start; k < n; ++k) {
      if (q[k] * s <= 0) growing = false;
      if (k > start && std::fabs(q[k]) <= std::fabs(q[k - 1])) growing = false;
    }
    const bool large = std::fabs(q[n - 1]) > 1.0 / cfg.tol_abs;
    if (growing && (large || std::fabs(q[n - 1]) >= 10.0 * std::fabs(q[start])))
      return {DivergentLimit{s > 0 ? 1 : -1}};
  }

  NoLimit nl;
  const std::size_t from = n >= w ? n - w : 0;
  const auto [lo, hi] = std::minmax_element(q.begin() + static_cast<std::ptrdiff_t>(from), q.end());
  nl.amplitude = 0.5 * (*hi - *lo);
  nl.trace = tr.q;
  return {nl};
}

}  // namespace detail

/// <grad(x), d>.
inline double dir_deriv1(const Expr& f, const Point& x, const Vec& d) {
  require_point(d, f.dim(), "direction");
  return f.grad(x).dot(d);
}

/// Quotients 2[f(x+t d) - f(x) - t <grad f(x), d>] / t^2 on t_k = t0 rho^k.
inline QuotientTrace dp_quotients(const Expr& f, const Point& x, const Vec& d,
                                  const DerivConfig& cfg) {
  cfg.validate();
  require_point(d, f.dim(), "direction");
  if (d.isZero(0.0)) throw InputError("direction must be nonzero");
  const double f0 = f.eval(x);
  const double g1 = dir_deriv1(f, x, d);
  QuotientTrace tr;
  double t = cfg.t0;
  for (int k = 0; k < cfg.max_steps; ++k, t *= cfg.rho) {
    const double ft = f.eval(x + t * d);
    const double num = ft - f0 - t * g1;
    tr.t.push_back(t);
    tr.q.push_back(2.0 * num / (t * t));
    tr.noise.push_back(16.0 * detail::kEps * (std::fabs(ft) + std::fabs(f0) + std::fabs(t * g1)) /
                       (t * t));
  }
  detail::mark_usable(tr, cfg.window);
  return tr;
}

/// Demyanov-Pevnyi second-order directional derivative
/// lim_{t->0+} 2/t^2 [f(x+td) - f(x) - t <grad f(x), d>].
inline DirDeriv2Result second_dp(const Expr& f, const Point& x, const Vec& d,
                                 const DerivConfig& cfg = {}) {
  return detail::classify(dp_quotients(f, x, d, cfg), cfg, cfg.rho);
}

/// Fast path through second-order Taylor arithmetic along the ray. The ray is
/// probed at t = h 2^-k down to about 1e-15; absent when the evaluated piece
/// changes across the probes or the extrapolated value is not stable.
inline std::optional<double> second_ad(const Expr& f, const Point& x, const Vec& d) {
  require_point(d, f.dim(), "direction");
  constexpr int kProbes = 40;
  const double h = 1e-3 / std::max(1.0, d.norm());
  std::vector<double> s(kProbes);
  BranchTrace first;
  try {
    for (int k = 0; k < kProbes; ++k) {
      BranchTrace sig;
      const Jet j = f.eval_ray(x, d, std::ldexp(h, -k), &sig);
      if (k == 0) first = sig;
      else if (sig.entries != first.entries) return std::nullopt;
      s[static_cast<std::size_t>(k)] = 2.0 * j.c2;
    }
  } catch (const KinkError&) {
    return std::nullopt;
  } catch (const DomainError&) {
    return std::nullopt;
  }

  // When t = 0 sits on the same piece, the jet there is exact.
  try {
    BranchTrace at_zero;
    const Jet j0 = f.eval_ray(x, d, 0.0, &at_zero);
    if (at_zero.entries == first.entries) return 2.0 * j0.c2;
  } catch (const Error&) {
  }
  const double s0 = s[kProbes - 3], s1 = s[kProbes - 2], s2 = s[kProbes - 1];
  const double r0 = 2.0 * s1 - s0;
  const double r1 = 2.0 * s2 - s1;
  const double value = (4.0 * r1 - r0) / 3.0;
  if (!std::isfinite(value) || std::fabs(r1 - r0) > 1e-6 * std::max(1.0, std::fabs(value)))
    return std::nullopt;
  return value;
}

/// Hadamard-type estimate: the same quotient with u_k = d + sqrt(t_k) v for a
/// fixed seeded set of unit perturbations v. Finite only when every perturbed
/// sequence converges and all limits agree within the configured tolerance.
inline DirDeriv2Result hadamard_second_estimate(const Expr& f, const Point& x, const Vec& d,
                                                const DerivConfig& cfg = {}) {
  cfg.validate();
  require_point(d, f.dim(), "direction");
  if (d.isZero(0.0)) throw InputError("direction must be nonzero");
  constexpr int kPerturbations = 8;
  constexpr std::uint64_t kSeed = 0x4861646d61726421ULL;
  Rng rng(kSeed);
  std::vector<Vec> perturb;
  for (int i = 0; i < kPerturbations; ++i) perturb.push_back(rng.unit(d.size()));

  const double f0 = f.eval(x);
  const Vec g = f.grad(x);
  std::vector<DirDeriv2Result> results;
  std::vector<QuotientTrace> traces;
  for (const Vec& v : perturb) {
    QuotientTrace tr;
    double t = cfg.t0;
    for (int k = 0; k < cfg.max_steps; ++k, t *= cfg.rho) {
      const Vec u = d + std::sqrt(t) * v;
      const double ft = f.eval(x + t * u);
      const double lin = t * g.dot(u);
      tr.t.push_back(t);
      tr.q.push_back(2.0 * (ft - f0 - lin) / (t * t));
      tr.noise.push_back(16.0 * detail::kEps * (std::fabs(ft) + std::fabs(f0) + std::fabs(lin)) /
                         (t * t));
    }
    detail::mark_usable(tr, cfg.window);
    results.push_back(detail::classify(tr, cfg, std::sqrt(cfg.rho)));
    traces.push_back(std::move(tr));
  }

  const bool all_finite =
      std::all_of(results.begin(), results.end(), [](const auto& r) { return r.finite(); });
  if (all_finite) {
    std::vector<double> values;
    double max_unc = 0.0;
    for (const auto& r : results) {
      values.push_back(r.value());
      max_unc = std::max(max_unc, r.uncertainty());
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double med = detail::median(values);
    if (*hi - *lo <= cfg.tolerance(med))
      return {FiniteLimit{med, (*hi - *lo) + max_unc, LimitPath::Extrapolated}};
  }
  const auto* first = std::get_if<DivergentLimit>(&results.front().outcome);
  if (first && std::all_of(results.begin(), results.end(), [&](const auto& r) {
        const auto* dv = std::get_if<DivergentLimit>(&r.outcome);
        return dv && dv->sign == first->sign;
      }))
    return {*first};

  NoLimit nl;
  const std::size_t steps = traces.front().q.size();
  for (std::size_t k = 0; k < steps; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& tr : traces) {
      lo = std::min(lo, tr.q[k]);
      hi = std::max(hi, tr.q[k]);
    }
    nl.trace.push_back(hi - lo);
  }
  if (all_finite) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : results) {
      lo = std::min(lo, r.value());
      hi = std::max(hi, r.value());
    }
    nl.amplitude = 0.5 * (hi - lo);
  } else {
    nl.amplitude = 0.5 * nl.trace.back();
  }
  return {nl};
}

struct StabilityEstimate {
  bool bounded = true;
  double modulus_estimate = 0.0;
  std::vector<double> shell_ratios;
  std::size_t skipped = 0;
};

/// Probes sup ||grad f(y) - grad f(x)|| / ||y - x|| on shells of radius
/// t0 * 10^-s. Unbounded when the ratio grows tenfold across the last three
/// shells.
inline StabilityEstimate gradient_stability_estimate(const Expr& f, const Point& x,
                                                     const DerivConfig& cfg = {}) {
  cfg.validate();
  constexpr int kShells = 8;
  constexpr int kRandomPerShell = 16;
  constexpr std::uint64_t kSeed = 0x53746162696c6974ULL;
  const Eigen::Index n = x.size();
  const Vec g0 = f.grad(x);
  Rng rng(kSeed);
  std::vector<Vec> dirs;
  for (Eigen::Index i = 0; i < n; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(-Vec::Unit(n, i));
  }
  for (int i = 0; i < kRandomPerShell; ++i) dirs.push_back(rng.unit(n));

  StabilityEstimate out;
  std::size_t total = 0;
  double radius = cfg.t0;
  for (int s = 0; s < kShells; ++s, radius *= 0.1) {
    double ratio = -1.0;
    for (const Vec& u : dirs) {
      ++total;
      try {
        const Vec gy = f.grad(x + radius * u);
        ratio = std::max(ratio, (gy - g0).norm() / radius);
      } catch (const Error&) {
        ++out.skipped;
      }
    }
    if (ratio >= 0.0) out.shell_ratios.push_back(ratio);
  }
  if (2 * out.skipped > total)
    throw Inconclusive("gradient stability probe: more than half of the samples failed");
  for (double r : out.shell_ratios) out.modulus_estimate = std::max(out.modulus_estimate, r);
  const std::size_t m = out.shell_ratios.size();
  if (m >= 3) {
    const double a = out.shell_ratios[m - 3];
    const double b = out.shell_ratios[m - 1];
    out.bounded = !(b >= 10.0 * a && b > 0.0);
  }
  return out;
}

}  // namespace dpcert
