#pragma once

#include <string>
#include <vector>

#include "dpcert/problem.hpp"
#include "dpcert/rng.hpp"

namespace dpcert::testing {

inline const char* kF1 = "if x1 != 0 then x1^(7/3)*sin(1/x1) + x2 else x2";
inline const char* kPiecewise = "if x1 >= 0 then x1^2 else -(x1^2)";

inline Problem ex1() {
  Problem pr = Problem::make(2, {kF1, "x1"}, {"x1^2 - x2"}, Box::cube(2, 2.0));
  pr.deriv.max_steps = 80;
  return pr;
}

inline Problem lvp() { return Problem::make(2, {"x1", "x2"}, {"-x2"}, Box::cube(2, 2.0)); }

inline Problem counterexample() {
  Problem pr = Problem::make(1, {"-(x1^3)"}, {"-(x1^3) + x1^2"}, Box::cube(1, 2.0));
  pr.eta = std::vector<std::string>{"y1"};
  return pr;
}

inline Point pt(std::initializer_list<double> v) {
  Point x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double c : v) x[i++] = c;
  return x;
}

/// Random smooth expression text (no conditionals, abs or sign) that is
/// defined everywhere on R^n.
inline std::string random_smooth(Rng& rng, int n, int depth) {
  auto leaf = [&]() -> std::string {
    if (rng.uniform() < 0.7) return "x" + std::to_string(1 + rng.below(static_cast<std::size_t>(n)));
    const double c = std::round(rng.uniform(-2.0, 2.0) * 100.0) / 100.0;
    return c < 0 ? "(" + std::to_string(c) + ")" : std::to_string(c);
  };
  if (depth == 0) return leaf();
  const std::string a = random_smooth(rng, n, depth - 1);
  switch (rng.below(10)) {
    case 0: return "sin(" + a + ")";
    case 1: return "cos(" + a + ")";
    case 2: return "exp(sin(" + a + "))";
    case 3: return "log(1 + (" + a + ")^2)";
    case 4: return "sqrt(1 + (" + a + ")^2)";
    case 5: return "(" + a + ")^" + std::to_string(2 + rng.below(2));
    case 6: return "(" + a + ") / (2 + cos(" + random_smooth(rng, n, depth - 1) + "))";
    case 7: return "(" + a + ") * (" + random_smooth(rng, n, depth - 1) + ")";
    case 8: return "(" + a + ") - (" + random_smooth(rng, n, depth - 1) + ")";
    default: return "(" + a + ") + (" + random_smooth(rng, n, depth - 1) + ")";
  }
}

}  // namespace dpcert::testing
