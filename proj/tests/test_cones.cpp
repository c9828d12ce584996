#include <gtest/gtest.h>

#include "dpcert/cones.hpp"
#include "test_util.hpp"

using namespace dpcert;
using dpcert::testing::pt;

namespace {

const Tolerances kTol{};

ConeH random_cone(Rng& rng) {
  const auto n = static_cast<Eigen::Index>(1 + rng.below(4));
  ConeH c(n);
  const auto rows = 1 + rng.below(static_cast<std::size_t>(2 * n + 1));
  for (std::size_t i = 0; i < rows; ++i) c.add_le(rng.gaussian(n));
  if (n > 1 && rng.uniform() < 0.3) c.add_eq(rng.gaussian(n));
  return c;
}

}  // namespace

TEST(ActiveSets, Examples) {
  EXPECT_EQ(active_constraints(dpcert::testing::ex1(), pt({0, 0}), kTol), IndexSet({0}));
  EXPECT_EQ(active_constraints(dpcert::testing::lvp(), pt({0, 0}), kTol), IndexSet({0}));
  EXPECT_TRUE(active_constraints(dpcert::testing::ex1(), pt({0, 0.5}), kTol).empty());
  try {
    active_constraints(dpcert::testing::ex1(), pt({1, 0}), kTol);
    FAIL();
  } catch (const InfeasiblePoint& e) {
    EXPECT_EQ(e.constraint(), 0u);
  }
}

TEST(ZeroSets, Examples) {
  const auto ex1 = zero_sets(dpcert::testing::ex1(), pt({0, 0}), pt({-1, 0}), kTol);
  EXPECT_EQ(ex1.J_zero, IndexSet({0}));
  EXPECT_EQ(ex1.I_zero, IndexSet({0}));
  const auto lvp = zero_sets(dpcert::testing::lvp(), pt({0, 0}), pt({-1, 0}), kTol);
  EXPECT_EQ(lvp.J_zero, IndexSet({1}));
  EXPECT_EQ(lvp.I_zero, IndexSet({0}));
  const Problem pr = Problem::make(2, {"x1 + x2"}, {"x1 - x2"}, Box::cube(2, 1));
  const auto none = zero_sets(pr, pt({0, 0}), pt({1, 0}), kTol);
  EXPECT_TRUE(none.J_zero.empty());
  EXPECT_TRUE(none.I_zero.empty());
  EXPECT_THROW(zero_sets(pr, pt({0, 0}), pt({0, 0}), kTol), InputError);
}

TEST(CriticalCone, Examples) {
  const ConeH ex1 = critical_cone(dpcert::testing::ex1(), pt({0, 0}), kTol);
  ASSERT_EQ(ex1.A_le.rows(), 3);
  EXPECT_EQ(Vec(ex1.A_le.row(0).transpose()), pt({0, 1}));
  EXPECT_EQ(Vec(ex1.A_le.row(1).transpose()), pt({1, 0}));
  EXPECT_EQ(Vec(ex1.A_le.row(2).transpose()), pt({0, -1}));
  EXPECT_EQ(ex1.A_eq.rows(), 0);
  EXPECT_TRUE(contains(ex1, pt({-1, 0}), kTol));
  EXPECT_FALSE(contains(ex1, pt({1, 0}), kTol));
  EXPECT_FALSE(contains(ex1, pt({-1, 0.1}), kTol));
  EXPECT_TRUE(contains(ex1, pt({0, 0}), kTol));

  const ConeH lvp = critical_cone(dpcert::testing::lvp(), pt({0, 0}), kTol);
  EXPECT_TRUE(contains(lvp, pt({-3, 0}), kTol));
  EXPECT_FALSE(contains(lvp, pt({-3, 1}), kTol));
  EXPECT_FALSE(contains(lvp, pt({1, 0}), kTol));

  const ConeH ce = critical_cone(dpcert::testing::counterexample(), pt({0}), kTol);
  EXPECT_TRUE(contains(ce, pt({1}), kTol));
  EXPECT_TRUE(contains(ce, pt({-1}), kTol));
  EXPECT_FALSE(is_trivial(ce, kTol));
}

TEST(ConeCxdPerp, Examples) {
  const Problem ex1 = dpcert::testing::ex1();
  const ConeH without = cone_cxd_perp(ex1, pt({0, 0}), pt({-1, 0}), false, kTol);
  EXPECT_TRUE(contains(without, pt({0, 1}), kTol));
  EXPECT_FALSE(contains(without, pt({0, -1}), kTol));
  EXPECT_FALSE(contains(without, pt({1, 1}), kTol));
  EXPECT_FALSE(is_trivial(without, kTol));
  const ConeH with = cone_cxd_perp(ex1, pt({0, 0}), pt({-1, 0}), true, kTol);
  EXPECT_TRUE(is_trivial(with, kTol));

  const Problem free2 = Problem::make(2, {"x1"}, {}, Box::cube(2, 1));
  const ConeH line = cone_cxd_perp(free2, pt({0, 0}), pt({1, 0}), false, kTol);
  EXPECT_TRUE(contains(line, pt({0, 1}), kTol));
  EXPECT_TRUE(contains(line, pt({0, -1}), kTol));
  EXPECT_FALSE(contains(line, pt({1, 0}), kTol));
}

TEST(IsTrivial, ForcedToZero) {
  ConeH c(2);
  c.add_le(pt({1, 0}));
  c.add_le(pt({-1, 0}));
  c.add_le(pt({0, 1}));
  c.add_le(pt({0, -1}));
  EXPECT_TRUE(is_trivial(c, kTol));
  ConeH open(2);
  open.add_le(pt({1, 0}));
  EXPECT_FALSE(is_trivial(open, kTol));
}

TEST(SampleUnit, Ex1RayIsExact) {
  const ConeH c = critical_cone(dpcert::testing::ex1(), pt({0, 0}), kTol);
  const ConeSample s = sample_unit(c, 256, 7, kTol);
  ASSERT_EQ(s.dirs.size(), 256u);
  EXPECT_FALSE(s.short_count);
  ASSERT_GE(s.extreme_rays, 1u);
  EXPECT_EQ(s.dirs[0], pt({-1, 0}));
  for (const Vec& d : s.dirs) {
    EXPECT_TRUE(contains(c, d, kTol));
    EXPECT_NEAR(d.norm(), 1.0, 1e-12);
  }
}

TEST(SampleUnit, FullLineAndHalfLine) {
  const ConeSample full = sample_unit(ConeH(1), 2, 1, kTol);
  ASSERT_EQ(full.dirs.size(), 2u);
  EXPECT_EQ(full.extreme_rays, 2u);
  EXPECT_EQ(full.dirs[0][0] * full.dirs[1][0], -1.0);

  ConeH half(1);
  half.add_le(pt({1}));
  const ConeSample h = sample_unit(half, 10, 1, kTol);
  ASSERT_EQ(h.dirs.size(), 10u);
  EXPECT_EQ(h.extreme_rays, 1u);
  for (const Vec& d : h.dirs) EXPECT_EQ(d[0], -1.0);
}

TEST(SampleUnit, TrivialConeYieldsNothing) {
  ConeH c(1);
  c.add_le(pt({1}));
  c.add_le(pt({-1}));
  const ConeSample s = sample_unit(c, 5, 1, kTol);
  EXPECT_TRUE(s.dirs.empty());
  EXPECT_TRUE(s.short_count);
}

TEST(ConesProperty, SamplesAreUnitMembers) {
  Rng rng(8);
  for (int k = 0; k < 60; ++k) {
    const ConeH c = random_cone(rng);
    if (is_trivial(c, kTol)) continue;
    const ConeSample s = sample_unit(c, 32, static_cast<std::uint64_t>(k), kTol);
    for (const Vec& d : s.dirs) {
      EXPECT_TRUE(contains(c, d, kTol));
      EXPECT_NEAR(d.norm(), 1.0, 1e-12);
    }
  }
}

TEST(ConesProperty, SampleIsSchedulingIndependent) {
  const ConeH c = critical_cone(dpcert::testing::lvp(), pt({0, 0}), kTol);
  ConeH wide(3);
  wide.add_le(pt({1, 1, 0}));
  wide.add_le(pt({0, -1, 1}));
  const auto a = sample_unit(wide, 64, 3, kTol, 1);
  const auto b = sample_unit(wide, 64, 3, kTol, 4);
  ASSERT_EQ(a.dirs.size(), b.dirs.size());
  for (std::size_t i = 0; i < a.dirs.size(); ++i) EXPECT_EQ(a.dirs[i], b.dirs[i]);
  EXPECT_FALSE(sample_unit(c, 4, 0, kTol).dirs.empty());
}

TEST(ConesProperty, CriticalDirectionLiesInItsLinearizedCone) {
  for (const Problem& pr : {dpcert::testing::ex1(), dpcert::testing::lvp(), dpcert::testing::counterexample()}) {
    const Point x = Point::Zero(pr.n);
    const ConeSample s = sample_unit(critical_cone(pr, x, kTol), 64, 5, kTol);
    for (const Vec& d : s.dirs) {
      ConeH cxd = cone_cxd_perp(pr, x, d, false, kTol);
      cxd.A_eq.resize(0, pr.n);
      EXPECT_TRUE(contains(cxd, d, kTol));
    }
  }
}

TEST(ConesProperty, CriticalConeMembershipMatchesDirectionalDerivatives) {
  Rng rng(12);
  const Problem pr = dpcert::testing::lvp();
  const ConeH c = critical_cone(pr, pt({0, 0}), kTol);
  for (int k = 0; k < 200; ++k) {
    Vec d = rng.unit(2);
    if (k % 4 == 0) d = pt({-1, 0}) * rng.uniform(0.1, 2.0);
    bool all = true;
    for (const auto& f : pr.f) all = all && f.grad(pt({0, 0})).dot(d) <= kTol.eps_zero * d.norm();
    for (const auto& g : pr.g) all = all && g.grad(pt({0, 0})).dot(d) <= kTol.eps_zero * d.norm();
    EXPECT_EQ(contains(c, d, kTol), all);
  }
}

// Brute-force oracle: 10^4 uniform sphere samples. Any contained sample proves
// the cone nontrivial, so is_trivial must then say false.
TEST(ConesProperty, TrivialityAgreesWithSphereSampling) {
  Rng rng(4242);
  int disagreements = 0;
  int nontrivial = 0;
  for (int k = 0; k < 100; ++k) {
    const ConeH c = random_cone(rng);
    const bool trivial = is_trivial(c, kTol);
    bool found = false;
    for (int s = 0; s < 10000 && !found; ++s) found = contains(c, rng.unit(c.n), kTol);
    if (found && trivial) ++disagreements;
    if (!trivial) ++nontrivial;
  }
  EXPECT_EQ(disagreements, 0);
  EXPECT_GT(nontrivial, 10);
}
