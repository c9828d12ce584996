#include <gtest/gtest.h>

#include <cmath>

#include "dpcert/expr.hpp"
#include "test_util.hpp"

using namespace dpcert;
using dpcert::testing::pt;

namespace {

const ast::Node& child(const ast::NodePtr& p) { return *p; }

}  // namespace

TEST(ExprParse, QuadraticMinusVariable) {
  const Expr e = parse_expr("x1^2 - x2", 2);
  const auto* sub = std::get_if<ast::Binary>(&e.root().kind);
  ASSERT_NE(sub, nullptr);
  EXPECT_EQ(sub->op, ast::BinaryOp::Sub);
  const auto* pw = std::get_if<ast::Binary>(&child(sub->lhs).kind);
  ASSERT_NE(pw, nullptr);
  EXPECT_EQ(pw->op, ast::BinaryOp::Pow);
  EXPECT_EQ(std::get<ast::Variable>(pw->lhs->kind).index, 1);
  EXPECT_EQ(std::get<ast::Constant>(pw->rhs->kind).value, 2.0);
  EXPECT_EQ(std::get<ast::Variable>(sub->rhs->kind).index, 2);
}

TEST(ExprParse, PiecewiseWithOddRoot) {
  const Expr e = parse_expr(dpcert::testing::kF1, 2);
  const auto* cond = std::get_if<ast::Conditional>(&e.root().kind);
  ASSERT_NE(cond, nullptr);
  EXPECT_EQ(cond->cmp, ast::CmpOp::Ne);
  const auto& add = std::get<ast::Binary>(cond->then_branch->kind);
  const auto& mul = std::get<ast::Binary>(add.lhs->kind);
  const auto& rp = std::get<ast::RationalPow>(mul.lhs->kind);
  EXPECT_EQ(rp.num, 7);
  EXPECT_EQ(rp.den, 3);
  EXPECT_EQ(std::get<ast::Variable>(rp.base->kind).index, 1);
}

TEST(ExprParse, EvenRootOfNegativeIsDomainError) {
  const Expr e = parse_expr("x1^(1/2)", 1);
  EXPECT_NEAR(e.eval(pt({4.0})), 2.0, 1e-15);
  EXPECT_THROW(e.eval(pt({-1.0})), DomainError);
}

TEST(ExprParse, Errors) {
  try {
    parse_expr("x1 + * x2", 2);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
  EXPECT_THROW(parse_expr("foo(x1)", 1), ParseError);
  EXPECT_THROW(parse_expr("x3", 2), ParseError);
  EXPECT_THROW(parse_expr("x0", 2), ParseError);
  EXPECT_THROW(parse_expr("(x1", 1), ParseError);
  EXPECT_THROW(parse_expr("if x1 then 1 else 2", 1), ParseError);
  EXPECT_THROW(parse_expr("", 1), ParseError);
}

TEST(ExprEval, Examples) {
  EXPECT_EQ(parse_expr("x1^2 - x2", 2).eval(pt({0, 0})), 0.0);
  EXPECT_EQ(parse_expr(dpcert::testing::kF1, 2).eval(pt({0, 0.5})), 0.5);
  EXPECT_EQ(parse_expr("x1^(1/3)", 1).eval(pt({-8})), -2.0);
  EXPECT_EQ(parse_expr("(-8)^(1/3)", 1).eval(pt({0})), -2.0);
}

TEST(ExprEval, DomainErrors) {
  EXPECT_THROW(parse_expr("log(x1)", 1).eval(pt({0})), DomainError);
  EXPECT_THROW(parse_expr("sqrt(x1)", 1).eval(pt({-1})), DomainError);
  EXPECT_THROW(parse_expr("1/x1", 1).eval(pt({0})), DomainError);
  EXPECT_THROW(parse_expr("x1^2.5", 1).eval(pt({-1})), DomainError);
  EXPECT_THROW(parse_expr("x1^x1", 1).eval(pt({-1})), DomainError);
  EXPECT_THROW(parse_expr("exp(x1)", 1).eval(pt({1000})), DomainError);
  try {
    parse_expr("1 + log(x1)", 1).eval(pt({-1}));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse_expr("x1", 2).eval(pt({1})), InputError);
  EXPECT_THROW(parse_expr("x1", 1).eval(pt({NAN})), InputError);
}

TEST(ExprGrad, Examples) {
  EXPECT_EQ(parse_expr("x1^2 - x2", 2).grad(pt({0, 0})), pt({0, -1}));
  EXPECT_EQ(parse_expr(dpcert::testing::kF1, 2).grad(pt({0, 0})), pt({0, 1}));
  EXPECT_EQ(parse_expr("x1", 2).grad(pt({3, -4})), pt({1, 0}));
}

TEST(ExprGrad, Kinks) {
  EXPECT_THROW(parse_expr("abs(x1)", 1).grad(pt({0})), KinkError);
  EXPECT_THROW(parse_expr("sign(x1)", 1).grad(pt({0})), KinkError);
  EXPECT_THROW(parse_expr("x1^(1/3)", 1).grad(pt({0})), KinkError);
  EXPECT_EQ(parse_expr("x1^(7/3)", 1).grad(pt({0}))[0], 0.0);
  EXPECT_EQ(parse_expr("abs(x2)", 2).grad(pt({1, -2})), pt({0, -1}));
  // A kink whose argument does not depend on the variables is harmless.
  EXPECT_EQ(parse_expr("abs(0)*x1", 1).grad(pt({2}))[0], 0.0);
}

TEST(ExprGrad, RationalPowMatchesClosedForm) {
  const Expr e = parse_expr("x1^(5/3)", 1);
  for (double v : {-2.0, -0.3, 0.7, 3.1}) {
    const double expect = 5.0 / 3.0 * std::cbrt(v) * std::cbrt(v);
    EXPECT_NEAR(e.grad(pt({v}))[0], expect, 1e-13 * std::fabs(expect));
  }
}

TEST(ExprFd, Examples) {
  EXPECT_NEAR(fd_gradient(parse_expr("x1^2", 1), pt({1}), 1e-5)[0], 2.0, 1e-9);
  EXPECT_NEAR(fd_gradient(parse_expr("sin(x1)", 1), pt({0}), 1e-5)[0], 1.0, 1e-9);
  const Expr f1 = parse_expr(dpcert::testing::kF1, 2);
  const Vec fd = fd_gradient(f1, pt({0.3, 0}), 1e-6);
  const Vec g = f1.grad(pt({0.3, 0}));
  EXPECT_LE((fd - g).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  EXPECT_THROW(fd_gradient(f1, pt({0.3, 0}), 0.0), InputError);
}

TEST(ExprPrint, RoundTripCorpus) {
  const std::vector<std::pair<std::string, int>> corpus = {
      {"x1^2 - x2", 2},
      {dpcert::testing::kF1, 2},
      {dpcert::testing::kPiecewise, 1},
      {"-(x1^3) + x1^2", 1},
      {"x1^(1/2)", 1},
      {"x1^(-2/3) * 4", 1},
      {"-x1^2", 1},
      {"-(x1^2)", 1},
      {"x1 - (x2 - x1)", 2},
      {"x1/(x2*x1)/3", 2},
      {"2.5e-3*x1 + .5", 1},
      {"if x1 < x2 then if x2 == 0 then 1 else 2 else sqrt(abs(x1))", 2},
      {"exp(x1)^x2", 2},
      {"sign(x1)*tan(x2) - cos(x1)*log(1 + x2^2)", 2},
      {"(if x1 > 0 then x1 else 0) + 1", 1},
  };
  for (const auto& [text, n] : corpus) {
    const Expr a = parse_expr(text, n);
    const std::string printed = print_expr(a);
    const Expr b = parse_expr(printed, n);
    EXPECT_TRUE(ast::structurally_equal(a.root(), b.root())) << text << " -> " << printed;
    EXPECT_EQ(print_expr(b), printed);
  }
}

TEST(ExprPrint, RationalPowFormat) {
  EXPECT_NE(print_expr(parse_expr(dpcert::testing::kF1, 2)).find("^(7/3)"), std::string::npos);
}

TEST(ExprProperty, AdAgreesWithFiniteDifferences) {
  Rng rng(20240601);
  int checked = 0;
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const std::string text = dpcert::testing::random_smooth(rng, n, 3);
    const Expr e = parse_expr(text, n);
    Point x = rng.gaussian(n) * 0.5;
    const Vec g = e.grad(x);
    const Vec fd = fd_gradient(e, x, 1e-6);
    EXPECT_LE((g - fd).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff())) << text;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(ExprProperty, Deterministic) {
  const Expr e = parse_expr(dpcert::testing::kF1, 2);
  const Point x = pt({-0.123, 0.4});
  const double a = e.eval(x);
  const Vec ga = e.grad(x);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(e.eval(x)), std::bit_cast<std::uint64_t>(a));
    EXPECT_EQ(e.grad(x), ga);
  }
}

TEST(ExprProperty, OddRootLaw) {
  const Expr cube = parse_expr("x1^(1/3)", 1);
  const Expr fifth = parse_expr("x1^(1/5)", 1);
  const Expr seven_thirds = parse_expr("x1^(7/3)", 1);
  const Expr two_fifths = parse_expr("x1^(2/5)", 1);
  for (int k = -20; k <= 20; ++k) {
    const double r = 0.37 * k;
    EXPECT_NEAR(cube.eval(pt({r * r * r})), r, 1e-14 * std::max(1.0, std::fabs(r)));
    const double r5 = r * r * r * r * r;
    EXPECT_NEAR(fifth.eval(pt({r5})), r, 1e-14 * std::max(1.0, std::fabs(r)));
    const double v = 0.53 * k;
    const double s = (v > 0) - (v < 0);
    EXPECT_NEAR(seven_thirds.eval(pt({v})), s * std::pow(std::fabs(v), 7.0 / 3.0),
                1e-13 * std::max(1.0, std::pow(std::fabs(v), 7.0 / 3.0)));
    EXPECT_NEAR(two_fifths.eval(pt({v})), std::pow(std::fabs(v), 0.4), 1e-14 * std::max(1.0, std::fabs(v)));
  }
}

TEST(ExprJet, RayCoefficients) {
  const Expr e = parse_expr("x1^2*x2", 2);
  const Jet j = e.eval_ray(pt({1, 2}), pt({1, -1}), 0.5);
  // g(t) = (1+t)^2 (2-t) at t = 0.5: value, first and half second derivative.
  EXPECT_NEAR(j.c0, 2.25 * 1.5, 1e-14);
  EXPECT_NEAR(j.c1, 2 * 1.5 * 1.5 - 2.25, 1e-14);
  EXPECT_NEAR(j.c2, 0.5 * (2 * 1.5 - 4 * 1.5), 1e-14);
}

TEST(ExprBranches, TraceRecordsTakenBranch) {
  const Expr e = parse_expr(dpcert::testing::kPiecewise, 1);
  BranchTrace a, b, c;
  e.eval(pt({1}), &a);
  e.eval(pt({2}), &b);
  e.eval(pt({-1}), &c);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_NE(a.entries, c.entries);
}
