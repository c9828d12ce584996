#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dpcert/errors.hpp"
#include "dpcert/lp.hpp"
#include "dpcert/parallel.hpp"
#include "dpcert/problem.hpp"
#include "dpcert/rng.hpp"

namespace dpcert {

/// Index sets are 0-based internally; reports print them 1-based.
using IndexSet = std::vector<std::size_t>;

struct ActiveSets {
  IndexSet I_active;
  IndexSet J_zero;
  IndexSet I_zero;
};

/// {w : A_le w <= 0, A_eq w = 0} in R^n.
struct ConeH {
  Mat A_le;
  Mat A_eq;
  Eigen::Index n = 0;

  explicit ConeH(Eigen::Index dim = 0) : A_le(0, dim), A_eq(0, dim), n(dim) {}

  void add_le(const Vec& a) {
    A_le.conservativeResize(A_le.rows() + 1, n);
    A_le.row(A_le.rows() - 1) = a.transpose();
  }
  void add_eq(const Vec& a) {
    A_eq.conservativeResize(A_eq.rows() + 1, n);
    A_eq.row(A_eq.rows() - 1) = a.transpose();
  }
};

/// {i : |g_i(x)| <= eps_active}. Throws InfeasiblePoint when some g_i(x) > eps_feas.
inline IndexSet active_constraints(const Problem& pr, const Point& x, const Tolerances& tol) {
  require_point(x, pr.n);
  IndexSet out;
  for (std::size_t i = 0; i < pr.m(); ++i) {
    const double v = pr.g[i].eval(x);
    if (v > tol.eps_feas) throw InfeasiblePoint(i, v);
    if (std::fabs(v) <= tol.eps_active) out.push_back(i);
  }
  return out;
}

namespace detail {
inline bool orthogonal(const Vec& a, const Vec& d, double eps) {
  return std::fabs(a.dot(d)) <= eps * a.norm() * d.norm();
}
}  // namespace detail

inline ActiveSets zero_sets(const Problem& pr, const Point& x, const Vec& d, const Tolerances& tol) {
  require_point(d, pr.n, "direction");
  if (d.isZero(0.0)) throw InputError("direction must be nonzero");
  ActiveSets s;
  s.I_active = active_constraints(pr, x, tol);
  for (std::size_t j = 0; j < pr.p(); ++j)
    if (detail::orthogonal(pr.f[j].grad(x), d, tol.eps_zero)) s.J_zero.push_back(j);
  for (std::size_t i : s.I_active)
    if (detail::orthogonal(pr.g[i].grad(x), d, tol.eps_zero)) s.I_zero.push_back(i);
  return s;
}

/// Critical cone: rows grad f_j (all j) and grad g_i (active i).
inline ConeH critical_cone(const Problem& pr, const Point& x, const Tolerances& tol) {
  ConeH c(pr.n);
  for (const auto& fj : pr.f) c.add_le(fj.grad(x));
  for (std::size_t i : active_constraints(pr, x, tol)) c.add_le(pr.g[i].grad(x));
  return c;
}

/// {w : <grad g_i, w> <= 0, i in I(x;d)} intersected with d-perp, optionally
/// with the rows grad f_j, j in J(x;d).
inline ConeH cone_cxd_perp(const Problem& pr, const Point& x, const Vec& d, bool with_objectives,
                           const Tolerances& tol) {
  const ActiveSets s = zero_sets(pr, x, d, tol);
  ConeH c(pr.n);
  for (std::size_t i : s.I_zero) c.add_le(pr.g[i].grad(x));
  if (with_objectives)
    for (std::size_t j : s.J_zero) c.add_le(pr.f[j].grad(x));
  c.add_eq(d);
  return c;
}

inline bool contains(const ConeH& cone, const Vec& w, const Tolerances& tol) {
  if (w.size() != cone.n) throw InputError("vector dimension does not match the cone");
  const double wn = w.norm();
  for (Eigen::Index i = 0; i < cone.A_le.rows(); ++i)
    if (cone.A_le.row(i).dot(w) > tol.eps_zero * cone.A_le.row(i).norm() * wn) return false;
  for (Eigen::Index i = 0; i < cone.A_eq.rows(); ++i)
    if (std::fabs(cone.A_eq.row(i).dot(w)) > tol.eps_zero * cone.A_eq.row(i).norm() * wn) return false;
  return true;
}

namespace detail {

/// Unit-normalized rows with zero rows dropped.
inline Mat normalized_rows(const Mat& A) {
  std::vector<Eigen::RowVectorXd> rows;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double nrm = A.row(i).norm();
    if (nrm > 0.0) rows.push_back(A.row(i) / nrm);
  }
  Mat out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

/// max obj.w over the cone intersected with {obj.w <= 1}.
inline double cone_lp_max(const Mat& A_le, const Mat& A_eq, const Vec& obj) {
  const Eigen::Index n = obj.size();
  LpProblem lp(n);
  lp.c = obj;
  lp.free_lower.assign(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < A_le.rows(); ++i) lp.add_le(A_le.row(i), 0.0);
  for (Eigen::Index i = 0; i < A_eq.rows(); ++i) lp.add_eq(A_eq.row(i), 0.0);
  lp.add_le(obj.transpose(), 1.0);
  const LpOutcome out = solve(lp);
  if (!out.optimal()) throw SolverStalled("cone LP did not reach an optimum");
  return out.value;
}

}  // namespace detail

/// True iff the cone is {0}: 2n LPs maximizing +-w_k.
inline bool is_trivial(const ConeH& cone, const Tolerances& tol) {
  const Mat A = detail::normalized_rows(cone.A_le);
  const Mat E = detail::normalized_rows(cone.A_eq);
  for (Eigen::Index k = 0; k < cone.n; ++k)
    for (double s : {1.0, -1.0})
      if (detail::cone_lp_max(A, E, s * Vec::Unit(cone.n, k)) > tol.tau_strict) return false;
  return true;
}

struct ConeSample {
  std::vector<Vec> dirs;
  std::size_t extreme_rays = 0;  ///< leading entries of dirs that are extreme rays / line generators
  bool short_count = false;      ///< fewer than requested could be produced
};

namespace detail {

/// Orthonormal basis of the null space of M (n columns), or the identity when M is empty.
inline Mat null_basis(const Mat& M, Eigen::Index n) {
  if (M.rows() == 0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

inline Vec snap_unit(Vec v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::fabs(v[i]) < 1e-14) v[i] = 0.0;
  return v / v.norm();
}

inline Mat stack(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), std::max(a.cols(), b.cols()));
  if (a.rows() > 0) out.topRows(a.rows()) = a;
  if (b.rows() > 0) out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace detail

/// `count` unit vectors in the cone. Extreme rays come first when n <= 3 (deduplicated);
/// the rest are seeded rejection samples in the span of the cone's lineality-free
/// part, falling back to nonnegative combinations of rays.
inline ConeSample sample_unit(const ConeH& cone, std::size_t count, std::uint64_t seed,
                              const Tolerances& tol, unsigned threads = 1) {
  const Eigen::Index n = cone.n;
  const Mat A = detail::normalized_rows(cone.A_le);
  Mat E = detail::normalized_rows(cone.A_eq);

  // Inequalities that hold with equality on the whole cone.
  std::vector<Eigen::RowVectorXd> ineq;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    if (detail::cone_lp_max(A, E, -A.row(i).transpose()) <= tol.tau_strict) {
      E.conservativeResize(E.rows() + 1, n);
      E.row(E.rows() - 1) = A.row(i);
    } else {
      ineq.push_back(A.row(i));
    }
  }
  Mat R(static_cast<Eigen::Index>(ineq.size()), n);
  for (std::size_t i = 0; i < ineq.size(); ++i) R.row(static_cast<Eigen::Index>(i)) = ineq[i];

  ConeSample out;
  const Mat N = detail::null_basis(E, n);
  const Eigen::Index k = N.cols();
  if (k == 0 || count == 0) {
    out.short_count = count > 0;
    return out;
  }

  std::vector<Vec> rays;
  if (n <= 3) {
    const auto r = static_cast<std::size_t>(R.rows());
    for (std::size_t size = 0; size < static_cast<std::size_t>(k) && size <= r; ++size) {
      std::vector<std::size_t> idx(size);
      for (std::size_t i = 0; i < size; ++i) idx[i] = i;
      for (;;) {
        Mat S(static_cast<Eigen::Index>(size), n);
        for (std::size_t i = 0; i < size; ++i) S.row(static_cast<Eigen::Index>(i)) = R.row(static_cast<Eigen::Index>(idx[i]));
        const Mat Z = detail::null_basis(detail::stack(E, S), n);
        if (Z.cols() == 1) {
          for (double sgn : {1.0, -1.0}) {
            const Vec v = detail::snap_unit(sgn * Z.col(0));
            if (!contains(cone, v, tol)) continue;
            bool dup = false;
            for (const Vec& u : rays) dup = dup || (u - v).norm() <= 1e-9;
            if (!dup) rays.push_back(v);
          }
        }
        std::size_t pos = size;
        while (pos > 0 && idx[pos - 1] == r - size + pos - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t i = pos; i < size; ++i) idx[i] = idx[i - 1] + 1;
      }
    }
  }
  out.dirs.assign(rays.begin(), rays.begin() + static_cast<std::ptrdiff_t>(std::min(rays.size(), count)));
  out.extreme_rays = out.dirs.size();

  const std::size_t need = count - out.dirs.size();
  std::vector<Vec> filled(need);
  std::vector<char> ok(need, 0);
  constexpr int kAttempts = 2000;
  parallel_for(need, threads, [&](std::size_t i) {
    Rng rng(split_seed(seed, i));
    for (int a = 0; a < kAttempts; ++a) {
      const Vec z = rng.gaussian(k);
      if (z.norm() < 1e-12) continue;
      const Vec v = detail::snap_unit(N * z);
      if (contains(cone, v, tol)) {
        filled[i] = v;
        ok[i] = 1;
        return;
      }
    }
    if (!rays.empty()) {
      for (int a = 0; a < kAttempts; ++a) {
        Vec v = Vec::Zero(n);
        for (const Vec& r : rays) v += rng.uniform() * r;
        if (v.norm() < 1e-12) continue;
        v = detail::snap_unit(v);
        if (contains(cone, v, tol)) {
          filled[i] = v;
          ok[i] = 1;
          return;
        }
      }
    }
  });
  for (std::size_t i = 0; i < need; ++i) {
    if (ok[i]) out.dirs.push_back(filled[i]);
    else out.short_count = true;
  }
  return out;
}

}  // namespace dpcert
