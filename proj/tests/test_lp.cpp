#include <gtest/gtest.h>

#include <bit>

#include "dpcert/lp.hpp"
#include "dpcert/rng.hpp"

using namespace dpcert;

namespace {

LpProblem one_var() {
  LpProblem lp(1);
  lp.c << 1.0;
  return lp;
}

LpProblem random_lp(Rng& rng) {
  const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
  LpProblem lp(n);
  lp.c = rng.gaussian(n);
  const auto n_le = 1 + rng.below(6);
  const auto n_eq = std::min<std::size_t>(rng.below(3), static_cast<std::size_t>(n - 1));
  Eigen::VectorXd x0(n);
  for (Eigen::Index j = 0; j < n; ++j) x0[j] = rng.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < n_le; ++i) {
    Eigen::RowVectorXd a(n);
    for (Eigen::Index j = 0; j < n; ++j) a[j] = rng.uniform(-1.0, 1.0);
    // Mostly feasible at x0, sometimes not.
    lp.add_le(a, a.dot(x0) + rng.uniform(-0.3, 1.0));
  }
  for (std::size_t i = 0; i < n_eq; ++i) {
    Eigen::RowVectorXd a(n);
    for (Eigen::Index j = 0; j < n; ++j) a[j] = rng.uniform(-1.0, 1.0);
    lp.add_eq(a, a.dot(x0));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    lp.free_lower[sj] = rng.uniform() < 0.25;
    if (rng.uniform() < 0.3) lp.upper[sj] = x0[j] + rng.uniform(0.0, 2.0);
  }
  return lp;
}

}  // namespace

TEST(LpSolve, BoundedMaximum) {
  LpProblem lp = one_var();
  lp.add_le(Eigen::RowVectorXd::Constant(1, 1.0), 1.0);
  const auto out = solve(lp);
  ASSERT_EQ(out.status, LpOutcome::Status::Optimal);
  EXPECT_NEAR(out.value, 1.0, 1e-12);
  EXPECT_NEAR(out.x[0], 1.0, 1e-12);
}

TEST(LpSolve, Unbounded) {
  EXPECT_EQ(solve(one_var()).status, LpOutcome::Status::Unbounded);
}

TEST(LpSolve, Infeasible) {
  LpProblem lp = one_var();
  lp.add_le(Eigen::RowVectorXd::Constant(1, 1.0), -1.0);
  EXPECT_EQ(solve(lp).status, LpOutcome::Status::Infeasible);
}

TEST(LpSolve, FreeVariablesAndEqualities) {
  // max -x1 - x2 s.t. x1 + x2 = -3, x1 >= -2 (as -x1 <= 2), both free.
  LpProblem lp(2);
  lp.c << -1.0, 0.0;
  lp.free_lower = {true, true};
  Eigen::RowVectorXd a(2), b(2);
  a << 1, 1;
  b << -1, 0;
  lp.add_eq(a, -3.0);
  lp.add_le(b, 2.0);
  const auto out = solve(lp);
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR(out.value, 2.0, 1e-12);
  EXPECT_NEAR(out.x[0], -2.0, 1e-12);
  EXPECT_NEAR(out.x[1], -1.0, 1e-12);
}

TEST(LpSolve, RedundantEqualities) {
  LpProblem lp(2);
  lp.c << 1.0, 1.0;
  Eigen::RowVectorXd a(2);
  a << 1, 1;
  lp.add_eq(a, 1.0);
  lp.add_eq(2 * a, 2.0);
  const auto out = solve(lp);
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR(out.value, 1.0, 1e-12);
}

TEST(LpSolve, RejectsInconsistentDimensions) {
  LpProblem lp(2);
  lp.b_le.resize(1);
  EXPECT_THROW(solve(lp), InputError);
}

TEST(LpEnumerate, Examples) {
  LpProblem lp = one_var();
  lp.add_le(Eigen::RowVectorXd::Constant(1, 1.0), 1.0);
  const auto out = enumerate_vertices(lp);
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR(out.value, 1.0, 1e-12);

  // Square system with a single feasible point.
  LpProblem sq(2);
  sq.c << 1.0, -1.0;
  Eigen::RowVectorXd r1(2), r2(2);
  r1 << 1, 2;
  r2 << 3, -1;
  sq.add_eq(r1, 4.0);
  sq.add_eq(r2, 5.0);
  const auto pt = enumerate_vertices(sq);
  ASSERT_TRUE(pt.optimal());
  EXPECT_NEAR(pt.x[0], 2.0, 1e-12);
  EXPECT_NEAR(pt.x[1], 1.0, 1e-12);

  EXPECT_EQ(enumerate_vertices(one_var()).status, LpOutcome::Status::Unbounded);
  EXPECT_THROW(enumerate_vertices(LpProblem(7)), InputError);
}

TEST(LpProperty, SolveMatchesVertexEnumeration) {
  Rng rng(2024);
  int counts[3] = {0, 0, 0};
  for (int k = 0; k < 200; ++k) {
    const LpProblem lp = random_lp(rng);
    const auto a = solve(lp);
    const auto b = enumerate_vertices(lp);
    ASSERT_EQ(a.status, b.status) << "case " << k;
    ++counts[static_cast<int>(a.status)];
    if (a.optimal()) {
      EXPECT_NEAR(a.value, b.value, 1e-7 * std::max(1.0, std::fabs(b.value))) << "case " << k;
      EXPECT_LE(lp.violation(a.x), 1e-8 * (1.0 + lp.scale()));
      EXPECT_NEAR(lp.c.dot(a.x), a.value, 1e-10 * std::max(1.0, std::fabs(a.value)));
    }
  }
  EXPECT_GT(counts[0], 20);
  EXPECT_GT(counts[1], 0);
  EXPECT_GT(counts[2], 0);
}

TEST(LpProperty, Deterministic) {
  Rng rng(31);
  for (int k = 0; k < 20; ++k) {
    const LpProblem lp = random_lp(rng);
    const auto a = solve(lp);
    const auto b = solve(lp);
    ASSERT_EQ(a.status, b.status);
    if (a.optimal()) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a.value), std::bit_cast<std::uint64_t>(b.value));
      EXPECT_EQ(a.x, b.x);
    }
  }
}
