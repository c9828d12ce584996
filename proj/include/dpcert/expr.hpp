#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dpcert/errors.hpp"

namespace dpcert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// A point of R^n. Always finite; see require_point().
using Point = Eigen::VectorXd;

inline void require_point(const Point& x, Eigen::Index n, const char* what = "point") {
  if (x.size() != n)
    throw InputError(std::string(what) + " has dimension " + std::to_string(x.size()) +
                     ", expected " + std::to_string(n));
  if (!x.allFinite()) throw InputError(std::string(what) + " has non-finite coordinates");
}

namespace ast {

enum class UnaryOp { Neg, Sin, Cos, Tan, Exp, Log, Abs, Sqrt, Sign };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class CmpOp { Eq, Ne, Le, Lt, Ge, Gt };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Constant {
  double value;
};
/// 1-based variable index.
struct Variable {
  int index;
};
struct Unary {
  UnaryOp op;
  NodePtr child;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs, rhs;
};
/// base^(num/den) with den odd and positive: real odd-root semantics.
struct RationalPow {
  NodePtr base;
  int num;
  int den;
};
struct Conditional {
  CmpOp cmp;
  NodePtr lhs, rhs;
  NodePtr then_branch, else_branch;
};

struct Node {
  std::variant<Constant, Variable, Unary, Binary, RationalPow, Conditional> kind;
  std::size_t offset = 0;
};

template <class T>
NodePtr make(T payload, std::size_t offset = 0) {
  return std::make_shared<const Node>(Node{std::move(payload), offset});
}

inline const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Sign: return "sign";
  }
  return "?";
}

inline const char* cmp_name(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Le: return "<=";
    case CmpOp::Lt: return "<";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
  }
  return "?";
}

inline bool compare(CmpOp op, double a, double b) {
  switch (op) {
    case CmpOp::Eq: return a == b;
    case CmpOp::Ne: return a != b;
    case CmpOp::Le: return a <= b;
    case CmpOp::Lt: return a < b;
    case CmpOp::Ge: return a >= b;
    case CmpOp::Gt: return a > b;
  }
  return false;
}

/// Equality of trees ignoring source offsets.
inline bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind.index() != b.kind.index()) return false;
  return std::visit(
      [&](const auto& lhs) -> bool {
        using T = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<T>(b.kind);
        if constexpr (std::is_same_v<T, Constant>) {
          return lhs.value == rhs.value;
        } else if constexpr (std::is_same_v<T, Variable>) {
          return lhs.index == rhs.index;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return lhs.op == rhs.op && structurally_equal(*lhs.child, *rhs.child);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return lhs.op == rhs.op && structurally_equal(*lhs.lhs, *rhs.lhs) &&
                 structurally_equal(*lhs.rhs, *rhs.rhs);
        } else if constexpr (std::is_same_v<T, RationalPow>) {
          return lhs.num == rhs.num && lhs.den == rhs.den &&
                 structurally_equal(*lhs.base, *rhs.base);
        } else {
          return lhs.cmp == rhs.cmp && structurally_equal(*lhs.lhs, *rhs.lhs) &&
                 structurally_equal(*lhs.rhs, *rhs.rhs) &&
                 structurally_equal(*lhs.then_branch, *rhs.then_branch) &&
                 structurally_equal(*lhs.else_branch, *rhs.else_branch);
        }
      },
      a.kind);
}

}  // namespace ast

// ---------------------------------------------------------------------------
// Number types for the generic evaluator.

/// First-order forward-mode dual number carrying a full gradient.
struct Dual {
  double v = 0.0;
  Vec g;
};

inline Dual operator-(const Dual& a) { return {-a.v, -a.g}; }
inline Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.g + b.g}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.g - b.g}; }
inline Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.v * b.g + b.v * a.g}; }
inline Dual operator/(const Dual& a, const Dual& b) {
  return {a.v / b.v, (a.g * b.v - a.v * b.g) / (b.v * b.v)};
}

/// Truncated second-order Taylor series in one variable:
/// f(t + s) = c0 + c1 s + c2 s^2 + o(s^2).
struct Jet {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

inline Jet operator-(const Jet& a) { return {-a.c0, -a.c1, -a.c2}; }
inline Jet operator+(const Jet& a, const Jet& b) { return {a.c0 + b.c0, a.c1 + b.c1, a.c2 + b.c2}; }
inline Jet operator-(const Jet& a, const Jet& b) { return {a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2}; }
inline Jet operator*(const Jet& a, const Jet& b) {
  return {a.c0 * b.c0, a.c0 * b.c1 + a.c1 * b.c0, a.c0 * b.c2 + a.c1 * b.c1 + a.c2 * b.c0};
}
inline Jet operator/(const Jet& a, const Jet& b) {
  const double q0 = a.c0 / b.c0;
  const double q1 = (a.c1 - q0 * b.c1) / b.c0;
  const double q2 = (a.c2 - q0 * b.c2 - q1 * b.c1) / b.c0;
  return {q0, q1, q2};
}

namespace detail {

inline double primal(double a) { return a; }
inline double primal(const Dual& a) { return a.v; }
inline double primal(const Jet& a) { return a.c0; }

/// Applies a scalar function with value f0, first derivative f1 and second
/// derivative f2 (at the primal value of `a`). Non-finite f1/f2 mark a kink.
inline double chain(double, double f0, double, double, std::size_t, const char*) { return f0; }

inline Dual chain(const Dual& a, double f0, double f1, double, std::size_t offset,
                  const char* what) {
  if (!std::isfinite(f1)) {
    if (a.g.isZero(0.0)) return {f0, a.g};
    throw KinkError(std::string("derivative undefined at kink of ") + what, offset);
  }
  return {f0, f1 * a.g};
}

inline Jet chain(const Jet& a, double f0, double f1, double f2, std::size_t offset,
                 const char* what) {
  const bool moving = a.c1 != 0.0 || a.c2 != 0.0;
  if (moving && !std::isfinite(f1))
    throw KinkError(std::string("derivative undefined at kink of ") + what, offset);
  if (a.c1 != 0.0 && !std::isfinite(f2))
    throw KinkError(std::string("second derivative undefined at ") + what, offset);
  const double c1 = moving ? f1 * a.c1 : 0.0;
  double c2 = moving ? f1 * a.c2 : 0.0;
  if (a.c1 != 0.0) c2 += 0.5 * f2 * a.c1 * a.c1;
  return {f0, c1, c2};
}

template <class Num>
inline constexpr int ad_order = 0;
template <>
inline constexpr int ad_order<Dual> = 1;
template <>
inline constexpr int ad_order<Jet> = 2;

inline double ipow(double v, long k) {
  if (k == 0) return 1.0;
  if (k < 0) return 1.0 / ipow(v, -k);
  double r = 1.0;
  double b = v;
  while (k > 0) {
    if (k & 1) r *= b;
    b *= b;
    k >>= 1;
  }
  return r;
}

inline bool is_small_integer(double k) {
  return k == std::floor(k) && std::fabs(k) < 1e9;
}

/// |v|^(1/q) with exact cube roots.
inline double odd_root(double abs_v, int den) {
  if (den == 1) return abs_v;
  if (den == 3) return std::cbrt(abs_v);
  return std::pow(abs_v, 1.0 / den);
}

}  // namespace detail

/// Sequence of branch decisions and kink-argument signs observed during one
/// evaluation; equal traces mean the same smooth piece was used.
struct BranchTrace {
  std::vector<std::int8_t> entries;
};

namespace detail {

template <class Num>
class Evaluator {
 public:
  Evaluator(std::span<const Num> vars, std::span<const double> primal_vars, Num zero,
            BranchTrace* trace)
      : vars_(vars), primal_vars_(primal_vars), zero_(std::move(zero)), trace_(trace) {}

  Num operator()(const ast::Node& node) const {
    Num out = std::visit([&](const auto& n) { return visit(n, node.offset); }, node.kind);
    if (!std::isfinite(primal(out))) throw DomainError("non-finite value", node.offset);
    return out;
  }

 private:
  Num constant(double c) const {
    if constexpr (std::is_same_v<Num, double>) {
      return c;
    } else if constexpr (std::is_same_v<Num, Dual>) {
      return Dual{c, Vec::Zero(zero_.g.size())};
    } else {
      return Jet{c, 0.0, 0.0};
    }
  }

  void note(std::int8_t v) const {
    if (trace_) trace_->entries.push_back(v);
  }
  static std::int8_t sign_of(double v) { return static_cast<std::int8_t>((v > 0) - (v < 0)); }

  Num visit(const ast::Constant& c, std::size_t) const { return constant(c.value); }

  Num visit(const ast::Variable& v, std::size_t) const {
    return vars_[static_cast<std::size_t>(v.index - 1)];
  }

  Num visit(const ast::Unary& u, std::size_t off) const {
    using ast::UnaryOp;
    Num a = (*this)(*u.child);
    const double v = primal(a);
    constexpr bool deriv = ad_order<Num> >= 1;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    switch (u.op) {
      case UnaryOp::Neg:
        return -a;
      case UnaryOp::Sin: {
        const double s = std::sin(v);
        return chain(a, s, deriv ? std::cos(v) : 0.0, -s, off, "sin");
      }
      case UnaryOp::Cos: {
        const double c = std::cos(v);
        return chain(a, c, deriv ? -std::sin(v) : 0.0, -c, off, "cos");
      }
      case UnaryOp::Tan: {
        const double t = std::tan(v);
        return chain(a, t, 1.0 + t * t, 2.0 * t * (1.0 + t * t), off, "tan");
      }
      case UnaryOp::Exp: {
        const double e = std::exp(v);
        return chain(a, e, e, e, off, "exp");
      }
      case UnaryOp::Log:
        if (v <= 0.0) throw DomainError("log of non-positive value", off);
        return chain(a, std::log(v), 1.0 / v, -1.0 / (v * v), off, "log");
      case UnaryOp::Abs:
        note(sign_of(v));
        return chain(a, std::fabs(v), v == 0.0 ? nan : (v > 0 ? 1.0 : -1.0), v == 0.0 ? nan : 0.0,
                     off, "abs");
      case UnaryOp::Sqrt: {
        if (v < 0.0) throw DomainError("sqrt of negative value", off);
        const double s = std::sqrt(v);
        if (v == 0.0) return chain(a, 0.0, inf, inf, off, "sqrt");
        return chain(a, s, 0.5 / s, -0.25 / (s * v), off, "sqrt");
      }
      case UnaryOp::Sign:
        note(sign_of(v));
        return chain(a, static_cast<double>((v > 0) - (v < 0)), v == 0.0 ? nan : 0.0,
                     v == 0.0 ? nan : 0.0, off, "sign");
    }
    throw DomainError("unknown unary operator", off);
  }

  Num visit(const ast::Binary& b, std::size_t off) const {
    using ast::BinaryOp;
    if (b.op == BinaryOp::Pow) return power(b, off);
    Num lhs = (*this)(*b.lhs);
    Num rhs = (*this)(*b.rhs);
    switch (b.op) {
      case BinaryOp::Add: return lhs + rhs;
      case BinaryOp::Sub: return lhs - rhs;
      case BinaryOp::Mul: return lhs * rhs;
      case BinaryOp::Div:
        if (primal(rhs) == 0.0) throw DomainError("division by zero", off);
        return lhs / rhs;
      case BinaryOp::Pow: break;
    }
    throw DomainError("unknown binary operator", off);
  }

  Num power(const ast::Binary& b, std::size_t off) const {
    Num base = (*this)(*b.lhs);
    const double v = primal(base);
    const double inf = std::numeric_limits<double>::infinity();
    if (const auto* lit = std::get_if<ast::Constant>(&b.rhs->kind)) {
      const double k = lit->value;
      if (is_small_integer(k)) {
        const long ik = static_cast<long>(k);
        if (v == 0.0 && ik < 0) throw DomainError("zero raised to a negative power", off);
        const double f0 = ipow(v, ik);
        const double f1 = ik == 0 ? 0.0 : k * ipow(v, ik - 1);
        const double f2 = (ik == 0 || ik == 1) ? 0.0 : k * (k - 1) * ipow(v, ik - 2);
        return chain(base, f0, f1, f2, off, "^");
      }
      if (v < 0.0) throw DomainError("fractional power of negative base", off);
      if (v == 0.0) {
        if (k < 0.0) throw DomainError("zero raised to a negative power", off);
        const double f1 = k > 1.0 ? 0.0 : inf;
        const double f2 = k > 2.0 ? 0.0 : inf;
        return chain(base, 0.0, f1, f2, off, "^");
      }
      return chain(base, std::pow(v, k), k * std::pow(v, k - 1.0), k * (k - 1.0) * std::pow(v, k - 2.0),
                   off, "^");
    }
    if (v <= 0.0) throw DomainError("power with non-literal exponent needs a positive base", off);
    Num e = (*this)(*b.rhs);
    Num lg = chain(base, std::log(v), 1.0 / v, -1.0 / (v * v), off, "log");
    Num prod = e * lg;
    const double ex = std::exp(primal(prod));
    return chain(prod, ex, ex, ex, off, "^");
  }

  Num visit(const ast::RationalPow& r, std::size_t off) const {
    Num base = (*this)(*r.base);
    const double v = primal(base);
    const double e = static_cast<double>(r.num) / r.den;
    const double inf = std::numeric_limits<double>::infinity();
    if (e < 2.0) note(sign_of(v));
    if (v == 0.0) {
      if (r.num < 0) throw DomainError("zero raised to a negative power", off);
      if (r.num == 0) return chain(base, 1.0, 0.0, 0.0, off, "^");
      const double f1 = e > 1.0 ? 0.0 : (e == 1.0 ? 1.0 : inf);
      const double f2 = e > 2.0 ? 0.0 : (e == 2.0 ? 2.0 : (e == 1.0 ? 0.0 : inf));
      return chain(base, 0.0, f1, f2, off, "^");
    }
    const double s = v > 0 ? 1.0 : -1.0;
    const double a = std::fabs(v);
    const double sp = (r.num % 2 == 0) ? 1.0 : s;  // sign(v)^num
    const double root = odd_root(a, r.den);
    const double f0 = sp * ipow(root, r.num);
    const double f1 = e * sp * s * ipow(root, r.num) / a;
    const double f2 = e * (e - 1.0) * sp * ipow(root, r.num) / (a * a);
    return chain(base, f0, f1, f2, off, "^");
  }

  Num visit(const ast::Conditional& c, std::size_t) const {
    Evaluator<double> plain(primal_vars_, primal_vars_, 0.0, nullptr);
    const bool taken = ast::compare(c.cmp, plain(*c.lhs), plain(*c.rhs));
    note(taken ? 1 : 0);
    return (*this)(taken ? *c.then_branch : *c.else_branch);
  }

  std::span<const Num> vars_;
  std::span<const double> primal_vars_;
  Num zero_;
  BranchTrace* trace_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Parser.

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, int n, char prefix) : s_(text), n_(n), prefix_(prefix) {}

  ast::NodePtr parse() {
    ast::NodePtr root = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
    throw ParseError(msg, at);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' ||
                                s_[pos_] == '\r'))
      ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  static bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  std::string_view peek_word() {
    skip_ws();
    std::size_t e = pos_;
    while (e < s_.size() && is_alpha(s_[e])) ++e;
    return s_.substr(pos_, e - pos_);
  }
  bool accept_keyword(std::string_view kw) {
    std::string_view w = peek_word();
    if (w != kw) return false;
    const std::size_t after = pos_ + w.size();
    if (after < s_.size() && is_digit(s_[after])) return false;
    pos_ = after;
    return true;
  }

  ast::NodePtr expr() {
    const std::size_t start = (skip_ws(), pos_);
    if (accept_keyword("if")) {
      ast::CmpOp op{};
      ast::NodePtr lhs, rhs;
      comparison(lhs, op, rhs);
      if (!accept_keyword("then")) fail("expected 'then'");
      ast::NodePtr then_branch = expr();
      if (!accept_keyword("else")) fail("expected 'else'");
      ast::NodePtr else_branch = expr();
      return ast::make(ast::Conditional{op, lhs, rhs, then_branch, else_branch}, start);
    }
    return sum();
  }

  void comparison(ast::NodePtr& lhs, ast::CmpOp& op, ast::NodePtr& rhs) {
    lhs = sum();
    if (accept("==")) op = ast::CmpOp::Eq;
    else if (accept("!=")) op = ast::CmpOp::Ne;
    else if (accept("<=")) op = ast::CmpOp::Le;
    else if (accept(">=")) op = ast::CmpOp::Ge;
    else if (accept("<")) op = ast::CmpOp::Lt;
    else if (accept(">")) op = ast::CmpOp::Gt;
    else fail("expected comparison operator");
    rhs = sum();
  }

  ast::NodePtr sum() {
    ast::NodePtr lhs = term();
    for (;;) {
      const std::size_t at = (skip_ws(), pos_);
      if (accept("+")) lhs = ast::make(ast::Binary{ast::BinaryOp::Add, lhs, term()}, at);
      else if (accept("-")) lhs = ast::make(ast::Binary{ast::BinaryOp::Sub, lhs, term()}, at);
      else return lhs;
    }
  }

  ast::NodePtr term() {
    ast::NodePtr lhs = factor();
    for (;;) {
      const std::size_t at = (skip_ws(), pos_);
      if (accept("*")) lhs = ast::make(ast::Binary{ast::BinaryOp::Mul, lhs, factor()}, at);
      else if (accept("/")) lhs = ast::make(ast::Binary{ast::BinaryOp::Div, lhs, factor()}, at);
      else return lhs;
    }
  }

  ast::NodePtr factor() {
    ast::NodePtr base = atom();
    const std::size_t at = (skip_ws(), pos_);
    if (!accept("^")) return base;
    int num = 0, den = 0;
    if (rational_literal(num, den)) {
      return ast::make(ast::RationalPow{base, num, den}, at);
    }
    skip_ws();
    if (pos_ < s_.size() && (is_digit(s_[pos_]) || s_[pos_] == '.')) {
      return ast::make(ast::Binary{ast::BinaryOp::Pow, base, number()}, at);
    }
    return ast::make(ast::Binary{ast::BinaryOp::Pow, base, atom()}, at);
  }

  /// Matches "(" ["-"] integer "/" integer ")" with an odd positive
  /// denominator. Anything else rewinds and is parsed as an ordinary atom.
  bool rational_literal(int& num, int& den) {
    const std::size_t save = pos_;
    auto rewind = [&] {
      pos_ = save;
      return false;
    };
    if (!accept("(")) return rewind();
    skip_ws();
    bool neg = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      neg = true;
      ++pos_;
    }
    long long a = 0, b = 0;
    if (!integer(a)) return rewind();
    if (!accept("/")) return rewind();
    skip_ws();
    if (!integer(b)) return rewind();
    if (!accept(")")) return rewind();
    if (b <= 0 || b % 2 == 0 || a > 1000000 || b > 1000000) return rewind();
    num = static_cast<int>(neg ? -a : a);
    den = static_cast<int>(b);
    return true;
  }

  bool integer(long long& out) {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
    if (pos_ == start || pos_ - start > 12) return false;
    out = std::stoll(std::string(s_.substr(start, pos_ - start)));
    return true;
  }

  ast::NodePtr number() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t e = pos_;
    while (e < s_.size() && is_digit(s_[e])) ++e;
    if (e < s_.size() && s_[e] == '.') {
      ++e;
      while (e < s_.size() && is_digit(s_[e])) ++e;
    }
    if (e < s_.size() && (s_[e] == 'e' || s_[e] == 'E')) {
      std::size_t k = e + 1;
      if (k < s_.size() && (s_[k] == '+' || s_[k] == '-')) ++k;
      if (k < s_.size() && is_digit(s_[k])) {
        while (k < s_.size() && is_digit(s_[k])) ++k;
        e = k;
      }
    }
    double value = 0.0;
    const char* first = s_.data() + start;
    const char* last = s_.data() + e;
    if (start < s_.size() && s_[start] == '.') {
      // from_chars rejects a leading '.', so parse "0" + digits instead.
      std::string tmp = "0" + std::string(first, last);
      auto [p, ec] = std::from_chars(tmp.data(), tmp.data() + tmp.size(), value);
      if (ec != std::errc() || p != tmp.data() + tmp.size()) fail_at("malformed number", start);
    } else {
      auto [p, ec] = std::from_chars(first, last, value);
      if (ec != std::errc() || p != last) fail_at("malformed number", start);
    }
    if (!std::isfinite(value)) fail_at("number out of range", start);
    pos_ = e;
    return ast::make(ast::Constant{value}, start);
  }

  ast::NodePtr atom() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (is_digit(c) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      ast::NodePtr inner = expr();
      if (!accept(")")) fail("expected ')'");
      return inner;
    }
    if (c == '-') {
      ++pos_;
      return ast::make(ast::Unary{ast::UnaryOp::Neg, atom()}, start);
    }
    if (is_alpha(c)) {
      std::size_t e = pos_;
      while (e < s_.size() && is_alpha(s_[e])) ++e;
      const std::string_view word = s_.substr(pos_, e - pos_);
      if (word.size() == 1 && word[0] == prefix_ && e < s_.size() && is_digit(s_[e])) {
        std::size_t k = e;
        while (k < s_.size() && is_digit(s_[k])) ++k;
        if (k - e > 9) fail_at("variable index too large", start);
        const int index = std::stoi(std::string(s_.substr(e, k - e)));
        if (index < 1 || index > n_)
          fail_at("variable " + std::string(s_.substr(start, k - start)) + " out of range (n=" +
                      std::to_string(n_) + ")",
                  start);
        pos_ = k;
        return ast::make(ast::Variable{index}, start);
      }
      static constexpr std::pair<std::string_view, ast::UnaryOp> funcs[] = {
          {"sin", ast::UnaryOp::Sin},   {"cos", ast::UnaryOp::Cos}, {"tan", ast::UnaryOp::Tan},
          {"exp", ast::UnaryOp::Exp},   {"log", ast::UnaryOp::Log}, {"abs", ast::UnaryOp::Abs},
          {"sqrt", ast::UnaryOp::Sqrt}, {"sign", ast::UnaryOp::Sign}};
      for (const auto& [name, op] : funcs) {
        if (word == name && !(e < s_.size() && is_digit(s_[e]))) {
          pos_ = e;
          if (!accept("(")) fail("expected '(' after " + std::string(name));
          ast::NodePtr arg = expr();
          if (!accept(")")) fail("expected ')'");
          return ast::make(ast::Unary{op, arg}, start);
        }
      }
      std::size_t k = e;
      while (k < s_.size() && is_digit(s_[k])) ++k;
      fail_at("unknown identifier '" + std::string(s_.substr(start, k - start)) + "'", start);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int n_;
  char prefix_;
};

// ---------------------------------------------------------------------------
// Printer.

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// Precedence levels: 0 conditional, 1 sum, 2 term, 3 power, 4 atom.
inline int level(const ast::Node& n) {
  return std::visit(
      [](const auto& k) -> int {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ast::Conditional>) return 0;
        else if constexpr (std::is_same_v<T, ast::Binary>) {
          switch (k.op) {
            case ast::BinaryOp::Add:
            case ast::BinaryOp::Sub: return 1;
            case ast::BinaryOp::Mul:
            case ast::BinaryOp::Div: return 2;
            case ast::BinaryOp::Pow: return 3;
          }
          return 0;
        } else if constexpr (std::is_same_v<T, ast::RationalPow>) return 3;
        else return 4;
      },
      n.kind);
}

inline bool is_integer_literal(const ast::Node& n) {
  const ast::Node* p = &n;
  if (const auto* u = std::get_if<ast::Unary>(&p->kind); u && u->op == ast::UnaryOp::Neg)
    p = u->child.get();
  const auto* c = std::get_if<ast::Constant>(&p->kind);
  return c && c->value >= 0 && c->value == std::floor(c->value);
}

inline void print(const ast::Node& n, int required, char prefix, std::string& out);

inline void print_exponent(const ast::Node& e, char prefix, std::string& out) {
  if (const auto* c = std::get_if<ast::Constant>(&e.kind); c && c->value >= 0) {
    out += format_double(c->value);
    return;
  }
  if (const auto* b = std::get_if<ast::Binary>(&e.kind);
      b && b->op == ast::BinaryOp::Div && is_integer_literal(*b->lhs) && is_integer_literal(*b->rhs)) {
    out += "(";
    print(e, 4, prefix, out);
    out += ")";
    return;
  }
  print(e, 4, prefix, out);
}

inline void print(const ast::Node& n, int required, char prefix, std::string& out) {
  const bool paren = level(n) < required;
  if (paren) out += "(";
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ast::Constant>) {
          if (k.value < 0 || std::signbit(k.value)) out += "(-" + format_double(-k.value) + ")";
          else out += format_double(k.value);
        } else if constexpr (std::is_same_v<T, ast::Variable>) {
          out += prefix;
          out += std::to_string(k.index);
        } else if constexpr (std::is_same_v<T, ast::Unary>) {
          if (k.op == ast::UnaryOp::Neg) {
            out += "-";
            print(*k.child, 4, prefix, out);
          } else {
            out += ast::unary_name(k.op);
            out += "(";
            print(*k.child, 0, prefix, out);
            out += ")";
          }
        } else if constexpr (std::is_same_v<T, ast::Binary>) {
          if (k.op == ast::BinaryOp::Pow) {
            print(*k.lhs, 4, prefix, out);
            out += "^";
            print_exponent(*k.rhs, prefix, out);
            return;
          }
          const bool additive = k.op == ast::BinaryOp::Add || k.op == ast::BinaryOp::Sub;
          const char* sym = k.op == ast::BinaryOp::Add   ? " + "
                            : k.op == ast::BinaryOp::Sub ? " - "
                            : k.op == ast::BinaryOp::Mul ? "*"
                                                         : "/";
          print(*k.lhs, additive ? 1 : 2, prefix, out);
          out += sym;
          print(*k.rhs, additive ? 2 : 3, prefix, out);
        } else if constexpr (std::is_same_v<T, ast::RationalPow>) {
          print(*k.base, 4, prefix, out);
          out += "^(" + std::to_string(k.num) + "/" + std::to_string(k.den) + ")";
        } else {
          out += "if ";
          print(*k.lhs, 1, prefix, out);
          out += " ";
          out += ast::cmp_name(k.cmp);
          out += " ";
          print(*k.rhs, 1, prefix, out);
          out += " then ";
          print(*k.then_branch, 0, prefix, out);
          out += " else ";
          print(*k.else_branch, 0, prefix, out);
        }
      },
      n.kind);
  if (paren) out += ")";
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// An immutable parsed expression in variables <prefix>1..<prefix>n.
/// Copies share the tree; safe to use concurrently.
class Expr {
 public:
  Expr() = default;
  Expr(ast::NodePtr root, int dim, char prefix = 'x')
      : root_(std::move(root)), dim_(dim), prefix_(prefix) {}

  static Expr parse(std::string_view text, int n, char prefix = 'x') {
    if (n < 1) throw InputError("expression dimension must be positive");
    return Expr(detail::Parser(text, n, prefix).parse(), n, prefix);
  }

  int dim() const noexcept { return dim_; }
  char prefix() const noexcept { return prefix_; }
  const ast::Node& root() const { return *root_; }
  const ast::NodePtr& root_ptr() const { return root_; }

  std::string print() const {
    std::string out;
    detail::print(*root_, 0, prefix_, out);
    return out;
  }

  double eval(const Point& x, BranchTrace* trace = nullptr) const {
    check(x);
    std::span<const double> vars(x.data(), static_cast<std::size_t>(x.size()));
    return detail::Evaluator<double>(vars, vars, 0.0, trace)(*root_);
  }

  /// Value and exact gradient of the branch selected at x.
  Dual eval_dual(const Point& x) const {
    check(x);
    std::vector<Dual> vars(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) vars[static_cast<std::size_t>(i)] = Dual{x[i], Vec::Unit(dim_, i)};
    std::span<const double> primal(x.data(), static_cast<std::size_t>(x.size()));
    return detail::Evaluator<Dual>(vars, primal, Dual{0.0, Vec::Zero(dim_)}, nullptr)(*root_);
  }

  Vec grad(const Point& x) const { return eval_dual(x).g; }

  /// Second-order Taylor coefficients of s -> f(x + (t + s) d) at s = 0.
  Jet eval_ray(const Point& x, const Vec& d, double t, BranchTrace* trace = nullptr) const {
    check(x);
    const Point base = x + t * d;
    std::vector<Jet> vars(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) vars[static_cast<std::size_t>(i)] = Jet{base[i], d[i], 0.0};
    std::span<const double> primal(base.data(), static_cast<std::size_t>(base.size()));
    return detail::Evaluator<Jet>(vars, primal, Jet{}, trace)(*root_);
  }

 private:
  void check(const Point& x) const { require_point(x, dim_); }

  ast::NodePtr root_;
  int dim_ = 0;
  char prefix_ = 'x';
};

inline Expr parse_expr(std::string_view text, int n, char prefix = 'x') {
  return Expr::parse(text, n, prefix);
}
inline std::string print_expr(const Expr& e) { return e.print(); }
inline double eval(const Expr& e, const Point& x) { return e.eval(x); }
inline Vec grad(const Expr& e, const Point& x) { return e.grad(x); }

/// Central differences, one coordinate at a time.
inline Vec fd_gradient(const Expr& e, const Point& x, double h) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  Vec g(x.size());
  Point xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (e.eval(xp) - e.eval(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

}  // namespace dpcert
