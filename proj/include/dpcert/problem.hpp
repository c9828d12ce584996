#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpcert/deriv.hpp"
#include "dpcert/errors.hpp"
#include "dpcert/expr.hpp"

namespace dpcert {

struct Tolerances {
  double eps_active = 1e-8;
  double eps_feas = 1e-8;
  double eps_zero = 1e-8;
  double tau_strict = 1e-7;

  void validate() const {
    if (!(eps_active > 0 && eps_feas > 0 && eps_zero > 0 && tau_strict > 0))
      throw InputError("tolerances must all be positive");
  }
};

/// Sampling parameters of the brute-force efficiency oracle.
struct OracleSettings {
  std::size_t n_samples = 10000;
  int shells = 12;
  double r0 = 0.5;
  double alpha_min = 1e-3;

  void validate() const {
    if (!(r0 > 0)) throw InputError("oracle.r0 must be positive");
    if (shells < 4) throw InputError("oracle.shells must be at least 4");
    if (!(alpha_min > 0)) throw InputError("oracle.alpha_min must be positive");
    if (n_samples == 0) throw InputError("oracle.n_samples must be positive");
  }
};

/// Axis-aligned sampling box standing in for the open domain X.
struct Box {
  std::vector<double> lo, hi;

  std::size_t dim() const { return lo.size(); }
  void validate(std::size_t n) const {
    if (lo.size() != n || hi.size() != n) throw InputError("box must have one [lo, hi] pair per variable");
    for (std::size_t i = 0; i < n; ++i)
      if (!(lo[i] < hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
        throw InputError("box interval " + std::to_string(i + 1) + " must satisfy lo < hi");
  }
  bool contains(const Point& x) const {
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (x[k] < lo[i] || x[k] > hi[i]) return false;
    }
    return true;
  }
  bool interior(const Point& x) const {
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (!(x[k] > lo[i] && x[k] < hi[i])) return false;
    }
    return true;
  }
  static Box cube(std::size_t n, double half) {
    return Box{std::vector<double>(n, -half), std::vector<double>(n, half)};
  }
};

/// min f(x) = (f_1..f_p)(x) subject to g_i(x) <= 0, x in box.
struct Problem {
  int n = 0;
  std::vector<std::string> objective_text;
  std::vector<std::string> constraint_text;
  std::vector<Expr> f;
  std::vector<Expr> g;
  Box box;
  std::optional<std::vector<std::string>> eta;
  Tolerances tol;
  DerivConfig deriv;
  OracleSettings oracle;

  std::size_t p() const { return f.size(); }
  std::size_t m() const { return g.size(); }

  static Problem make(int n, std::vector<std::string> objectives, std::vector<std::string> constraints,
                      Box box) {
    if (n < 1) throw InputError("n must be positive");
    if (objectives.empty()) throw InputError("at least one objective is required");
    Problem pr;
    pr.n = n;
    pr.objective_text = std::move(objectives);
    pr.constraint_text = std::move(constraints);
    for (const auto& s : pr.objective_text) pr.f.push_back(Expr::parse(s, n));
    for (const auto& s : pr.constraint_text) pr.g.push_back(Expr::parse(s, n));
    box.validate(static_cast<std::size_t>(n));
    pr.box = std::move(box);
    return pr;
  }

  void validate() const {
    tol.validate();
    deriv.validate();
    oracle.validate();
    box.validate(static_cast<std::size_t>(n));
    if (eta && eta->size() != static_cast<std::size_t>(n))
      throw InputError("eta must list one expression per variable");
  }

  /// Function k in the stacked order f_1..f_p, g_1..g_m.
  const Expr& function(std::size_t k) const { return k < p() ? f[k] : g[k - p()]; }

  /// Largest constraint value; <= 0 means feasible.
  double max_violation(const Point& x) const {
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& gi : g) v = std::max(v, gi.eval(x));
    return v;
  }
  bool feasible(const Point& x) const {
    for (const auto& gi : g)
      if (gi.eval(x) > tol.eps_feas) return false;
    return true;
  }
  Vec objectives(const Point& x) const {
    Vec v(static_cast<Eigen::Index>(p()));
    for (std::size_t j = 0; j < p(); ++j) v[static_cast<Eigen::Index>(j)] = f[j].eval(x);
    return v;
  }
};

/// Parses "a,b,c" into a point of dimension n.
inline Point parse_point(const std::string& text, int n) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw InputError("malformed coordinate '" + tok + "' in point");
    }
    while (used < tok.size() && (tok[used] == ' ' || tok[used] == '\t')) ++used;
    if (used != tok.size()) throw InputError("malformed coordinate '" + tok + "' in point");
    vals.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  Point x(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) x[static_cast<Eigen::Index>(i)] = vals[i];
  require_point(x, n);
  return x;
}

}  // namespace dpcert
