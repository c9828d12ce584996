#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "dpcert/errors.hpp"

namespace dpcert {

/// maximize c.x  s.t.  A_le x <= b_le,  A_eq x = b_eq,  lower_j <= x_j <= upper_j
/// where lower_j is 0 (default) or -inf (free_lower) and upper_j is +inf or finite.
struct LpProblem {
  Eigen::VectorXd c;
  Eigen::MatrixXd A_le;
  Eigen::VectorXd b_le;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  std::vector<bool> free_lower;
  std::vector<double> upper;

  explicit LpProblem(Eigen::Index vars = 0)
      : c(Eigen::VectorXd::Zero(vars)),
        A_le(0, vars),
        b_le(0),
        A_eq(0, vars),
        b_eq(0),
        free_lower(static_cast<std::size_t>(vars), false),
        upper(static_cast<std::size_t>(vars), std::numeric_limits<double>::infinity()) {}

  Eigen::Index vars() const { return c.size(); }

  void add_le(const Eigen::RowVectorXd& a, double b) {
    A_le.conservativeResize(A_le.rows() + 1, vars());
    A_le.row(A_le.rows() - 1) = a;
    b_le.conservativeResize(b_le.size() + 1);
    b_le[b_le.size() - 1] = b;
  }
  void add_eq(const Eigen::RowVectorXd& a, double b) {
    A_eq.conservativeResize(A_eq.rows() + 1, vars());
    A_eq.row(A_eq.rows() - 1) = a;
    b_eq.conservativeResize(b_eq.size() + 1);
    b_eq[b_eq.size() - 1] = b;
  }

  void validate() const {
    const auto n = vars();
    if (A_le.cols() != n || A_eq.cols() != n || A_le.rows() != b_le.size() ||
        A_eq.rows() != b_eq.size() || free_lower.size() != static_cast<std::size_t>(n) ||
        upper.size() != static_cast<std::size_t>(n))
      throw InputError("LP dimensions are inconsistent");
    if (!c.allFinite() || !A_le.allFinite() || !b_le.allFinite() || !A_eq.allFinite() ||
        !b_eq.allFinite())
      throw InputError("LP data must be finite");
    for (double u : upper)
      if (std::isnan(u) || u == -std::numeric_limits<double>::infinity())
        throw InputError("LP upper bound must be finite or +inf");
  }

  /// Largest violation of any constraint at x.
  double violation(const Eigen::VectorXd& x) const {
    double v = 0.0;
    if (A_le.rows() > 0) v = std::max(v, (A_le * x - b_le).maxCoeff());
    if (A_eq.rows() > 0) v = std::max(v, (A_eq * x - b_eq).cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < vars(); ++j) {
      if (!free_lower[static_cast<std::size_t>(j)]) v = std::max(v, -x[j]);
      v = std::max(v, x[j] - upper[static_cast<std::size_t>(j)]);
    }
    return v;
  }

  double scale() const {
    double s = 1.0;
    if (b_le.size() > 0) s = std::max(s, b_le.cwiseAbs().maxCoeff());
    if (b_eq.size() > 0) s = std::max(s, b_eq.cwiseAbs().maxCoeff());
    return s;
  }
};

struct LpOutcome {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double value = 0.0;

  bool optimal() const { return status == Status::Optimal; }
};

inline const char* to_string(LpOutcome::Status s) {
  switch (s) {
    case LpOutcome::Status::Optimal: return "optimal";
    case LpOutcome::Status::Infeasible: return "infeasible";
    case LpOutcome::Status::Unbounded: return "unbounded";
  }
  return "?";
}

namespace detail {

/// Dense tableau simplex in standard form: max c.z, T z = rhs, z >= 0.
class Tableau {
 public:
  static constexpr double kPivotTol = 1e-9;

  Tableau(Eigen::MatrixXd T, Eigen::VectorXd rhs, std::vector<Eigen::Index> basis, long cap)
      : T_(std::move(T)), rhs_(std::move(rhs)), basis_(std::move(basis)), cap_(cap) {}

  /// Runs primal simplex with Bland's rule for cost vector c over the first
  /// `active_cols` columns. Returns false when unbounded.
  bool optimize(const Eigen::VectorXd& c, Eigen::Index active_cols) {
    for (;;) {
      if (++iterations_ > cap_) throw SolverStalled("simplex iteration cap reached");
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < active_cols; ++j) {
        if (is_basic(j)) continue;
        double reduced = c[j];
        for (Eigen::Index i = 0; i < T_.rows(); ++i) reduced -= c[basis_[static_cast<std::size_t>(i)]] * T_(i, j);
        if (reduced > kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < T_.rows(); ++i) {
        if (T_(i, enter) <= kPivotTol) continue;
        const double ratio = rhs_[i] / T_(i, enter);
        if (ratio < best - 1e-14 ||
            (ratio <= best + 1e-14 && leave >= 0 &&
             basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
          if (ratio < best) best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }

  void pivot(Eigen::Index r, Eigen::Index col) {
    const double p = T_(r, col);
    T_.row(r) /= p;
    rhs_[r] /= p;
    for (Eigen::Index i = 0; i < T_.rows(); ++i) {
      if (i == r) continue;
      const double f = T_(i, col);
      if (f == 0.0) continue;
      T_.row(i) -= f * T_.row(r);
      rhs_[i] -= f * rhs_[r];
      if (std::fabs(T_(i, col)) < 1e-300) T_(i, col) = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = col;
  }

  void drop_row(Eigen::Index r) {
    const Eigen::Index m = T_.rows();
    for (Eigen::Index i = r; i + 1 < m; ++i) {
      T_.row(i) = T_.row(i + 1);
      rhs_[i] = rhs_[i + 1];
      basis_[static_cast<std::size_t>(i)] = basis_[static_cast<std::size_t>(i + 1)];
    }
    T_.conservativeResize(m - 1, Eigen::NoChange);
    rhs_.conservativeResize(m - 1);
    basis_.pop_back();
  }

  bool is_basic(Eigen::Index j) const {
    return std::find(basis_.begin(), basis_.end(), j) != basis_.end();
  }

  Eigen::VectorXd solution(Eigen::Index cols) const {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(cols);
    for (std::size_t i = 0; i < basis_.size(); ++i)
      if (basis_[i] < cols) z[basis_[i]] = rhs_[static_cast<Eigen::Index>(i)];
    return z;
  }

  Eigen::MatrixXd& T() { return T_; }
  Eigen::VectorXd& rhs() { return rhs_; }
  std::vector<Eigen::Index>& basis() { return basis_; }

 private:
  Eigen::MatrixXd T_;
  Eigen::VectorXd rhs_;
  std::vector<Eigen::Index> basis_;
  long cap_;
  long iterations_ = 0;
};

}  // namespace detail

/// Two-phase dense simplex with Bland's rule.
inline LpOutcome solve(const LpProblem& lp) {
  lp.validate();
  const Eigen::Index n = lp.vars();
  // Column layout: positive parts of all variables, negative parts of free
  // variables, one slack per inequality (including finite upper bounds).
  std::vector<Eigen::Index> neg_col(static_cast<std::size_t>(n), -1);
  Eigen::Index cols = n;
  for (Eigen::Index j = 0; j < n; ++j)
    if (lp.free_lower[static_cast<std::size_t>(j)]) neg_col[static_cast<std::size_t>(j)] = cols++;
  std::vector<Eigen::Index> upper_vars;
  for (Eigen::Index j = 0; j < n; ++j)
    if (std::isfinite(lp.upper[static_cast<std::size_t>(j)])) upper_vars.push_back(j);
  const Eigen::Index n_le = lp.A_le.rows() + static_cast<Eigen::Index>(upper_vars.size());
  const Eigen::Index n_eq = lp.A_eq.rows();
  const Eigen::Index rows = n_le + n_eq;
  const Eigen::Index slack0 = cols;
  cols += n_le;
  const Eigen::Index art0 = cols;
  const Eigen::Index total = cols + rows;

  auto put_row = [&](Eigen::MatrixXd& T, Eigen::Index r, const Eigen::RowVectorXd& a) {
    for (Eigen::Index j = 0; j < n; ++j) {
      T(r, j) = a[j];
      if (neg_col[static_cast<std::size_t>(j)] >= 0) T(r, neg_col[static_cast<std::size_t>(j)]) = -a[j];
    }
  };

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(rows, total);
  Eigen::VectorXd rhs(rows);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < lp.A_le.rows(); ++i, ++r) {
    put_row(T, r, lp.A_le.row(i));
    T(r, slack0 + r) = 1.0;
    rhs[r] = lp.b_le[i];
  }
  for (Eigen::Index j : upper_vars) {
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Unit(n, j);
    put_row(T, r, a);
    T(r, slack0 + r) = 1.0;
    rhs[r] = lp.upper[static_cast<std::size_t>(j)];
    ++r;
  }
  for (Eigen::Index i = 0; i < n_eq; ++i, ++r) {
    put_row(T, r, lp.A_eq.row(i));
    rhs[r] = lp.b_eq[i];
  }
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (rhs[i] < 0) {
      T.row(i) *= -1.0;
      rhs[i] = -rhs[i];
    }
    T(i, art0 + i) = 1.0;
    basis[static_cast<std::size_t>(i)] = art0 + i;
  }

  const long cap = 10000L * static_cast<long>(n + rows);
  detail::Tableau tab(std::move(T), std::move(rhs), std::move(basis), cap);

  // Phase 1: maximize -sum(artificials).
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(total);
  c1.tail(rows).setConstant(-1.0);
  tab.optimize(c1, total);
  double infeas = 0.0;
  for (std::size_t i = 0; i < tab.basis().size(); ++i)
    if (tab.basis()[i] >= art0) infeas += tab.rhs()[static_cast<Eigen::Index>(i)];
  if (infeas > 1e-9 * lp.scale()) return {LpOutcome::Status::Infeasible, {}, 0.0};

  // Drive artificials out of the basis; rows where that is impossible are redundant.
  for (Eigen::Index i = 0; i < tab.T().rows();) {
    if (tab.basis()[static_cast<std::size_t>(i)] < art0) {
      ++i;
      continue;
    }
    Eigen::Index col = -1;
    for (Eigen::Index j = 0; j < art0; ++j)
      if (std::fabs(tab.T()(i, j)) > detail::Tableau::kPivotTol && !tab.is_basic(j)) {
        col = j;
        break;
      }
    if (col >= 0) {
      tab.pivot(i, col);
      ++i;
    } else {
      tab.drop_row(i);
    }
  }

  // Phase 2 over the original columns only.
  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(total);
  for (Eigen::Index j = 0; j < n; ++j) {
    c2[j] = lp.c[j];
    if (neg_col[static_cast<std::size_t>(j)] >= 0) c2[neg_col[static_cast<std::size_t>(j)]] = -lp.c[j];
  }
  if (!tab.optimize(c2, art0)) return {LpOutcome::Status::Unbounded, {}, 0.0};

  const Eigen::VectorXd z = tab.solution(art0);
  Eigen::VectorXd x(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x[j] = z[j];
    if (neg_col[static_cast<std::size_t>(j)] >= 0) x[j] -= z[neg_col[static_cast<std::size_t>(j)]];
  }
  return {LpOutcome::Status::Optimal, x, lp.c.dot(x)};
}

namespace detail {

struct HalfSpaces {
  Eigen::MatrixXd G;  // G x <= h for the first n_ineq rows, = for the rest
  Eigen::VectorXd h;
  Eigen::Index n_ineq = 0;
};

/// Best vertex of {G x <= h (inequality rows), G x = h (equality rows)} by
/// brute force over all n-row subsets that contain every equality row.
inline LpOutcome best_vertex(const HalfSpaces& hs, const Eigen::VectorXd& c, double tol) {
  const Eigen::Index n = c.size();
  const Eigen::Index n_eq = hs.G.rows() - hs.n_ineq;
  LpOutcome best{LpOutcome::Status::Infeasible, {}, -std::numeric_limits<double>::infinity()};
  const Eigen::Index pick = n - n_eq;
  if (pick < 0 || pick > hs.n_ineq) return best;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pick));
  for (Eigen::Index i = 0; i < pick; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (;;) {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < pick; ++i) {
      M.row(i) = hs.G.row(idx[static_cast<std::size_t>(i)]);
      rhs[i] = hs.h[idx[static_cast<std::size_t>(i)]];
    }
    for (Eigen::Index i = 0; i < n_eq; ++i) {
      M.row(pick + i) = hs.G.row(hs.n_ineq + i);
      rhs[pick + i] = hs.h[hs.n_ineq + i];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() == n) {
      const Eigen::VectorXd x = lu.solve(rhs);
      const Eigen::VectorXd res = hs.G * x - hs.h;
      bool feasible = true;
      for (Eigen::Index i = 0; i < hs.G.rows() && feasible; ++i) {
        const double s = tol * (1.0 + std::fabs(hs.h[i]) + hs.G.row(i).cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff());
        feasible = i < hs.n_ineq ? res[i] <= s : std::fabs(res[i]) <= s;
      }
      if (feasible) {
        const double v = c.dot(x);
        if (best.status != LpOutcome::Status::Optimal || v > best.value) best = {LpOutcome::Status::Optimal, x, v};
      }
    }
    // Next combination.
    Eigen::Index k = pick - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == hs.n_ineq - pick + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (Eigen::Index i = k + 1; i < pick; ++i) idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
  }
  return best;
}

inline HalfSpaces lp_halfspaces(const LpProblem& lp, double box, bool homogeneous) {
  const Eigen::Index n = lp.vars();
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < lp.A_le.rows(); ++i) {
    rows.push_back(lp.A_le.row(i));
    rhs.push_back(homogeneous ? 0.0 : lp.b_le[i]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    rows.push_back(-Eigen::RowVectorXd::Unit(n, j));
    rhs.push_back(lp.free_lower[sj] ? box : 0.0);
    rows.push_back(Eigen::RowVectorXd::Unit(n, j));
    if (std::isfinite(lp.upper[sj])) rhs.push_back(homogeneous ? 0.0 : lp.upper[sj]);
    else rhs.push_back(box);
  }
  HalfSpaces hs;
  hs.n_ineq = static_cast<Eigen::Index>(rows.size());
  for (Eigen::Index i = 0; i < lp.A_eq.rows(); ++i) {
    rows.push_back(lp.A_eq.row(i));
    rhs.push_back(homogeneous ? 0.0 : lp.b_eq[i]);
  }
  hs.G.resize(static_cast<Eigen::Index>(rows.size()), n);
  hs.h.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    hs.G.row(static_cast<Eigen::Index>(i)) = rows[i];
    hs.h[static_cast<Eigen::Index>(i)] = rhs[i];
  }
  return hs;
}

}  // namespace detail

/// Brute-force oracle: best feasible vertex, with unboundedness detected on
/// the recession cone. Only for tiny problems (vars <= 6, rows <= 10).
inline LpOutcome enumerate_vertices(const LpProblem& lp) {
  lp.validate();
  if (lp.vars() > 6 || lp.A_le.rows() + lp.A_eq.rows() > 10)
    throw InputError("enumerate_vertices: problem exceeds the size cap (vars <= 6, rows <= 10)");
  constexpr double kBox = 1e6;
  const LpOutcome boxed = detail::best_vertex(detail::lp_halfspaces(lp, kBox, false), lp.c, 1e-9);
  if (!boxed.optimal()) return {LpOutcome::Status::Infeasible, {}, 0.0};
  const LpOutcome ray = detail::best_vertex(detail::lp_halfspaces(lp, 1.0, true), lp.c, 1e-9);
  if (ray.optimal() && ray.value > 1e-9 * std::max(1.0, lp.c.cwiseAbs().maxCoeff()))
    return {LpOutcome::Status::Unbounded, {}, 0.0};
  return boxed;
}

}  // namespace dpcert
