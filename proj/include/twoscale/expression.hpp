#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "twoscale/error.hpp"

namespace twoscale {

/// Values bound to the free variables of an expression.
struct ExprVars {
  double x = 0.0;  // also x1, y1
  double y = 0.0;  // also x2, y2
  double t = 0.0;
  double u = 0.0;
};

/// Compiled scalar expression over x, y, t, u.
///
/// Grammar: numbers, the variables x y t u (x1 x2 y1 y2 as aliases), the constant pi,
/// + - * / ^ with the usual precedence, parentheses and the functions sin cos tan exp log
/// sqrt abs sign min max pow, ball(cx, cy, r) and rect(x0, y0, x1, y1) (indicators of the
/// closed disk / rectangle at (x, y)).
class Expression {
 public:
  Expression() : Expression("0") {}

  explicit Expression(std::string text) : text_(std::move(text)) {
    Parser parser{text_, 0, {}};
    eval_ = parser.expression();
    parser.skip();
    if (parser.pos != text_.size()) parser.fail("unexpected '" + std::string(1, text_[parser.pos]) + "'");
    uses_ = parser.uses;
  }

  double operator()(const ExprVars& v) const { return eval_(v); }
  double operator()(double x, double y, double t = 0.0, double u = 0.0) const { return eval_({x, y, t, u}); }

  const std::string& text() const { return text_; }
  bool uses(char variable) const { return uses_.find(variable) != std::string::npos; }

 private:
  using Fn = std::function<double(const ExprVars&)>;

  struct Parser {
    const std::string& s;
    std::size_t pos;
    std::string uses;

    [[noreturn]] void fail(const std::string& what) const {
      throw Error(ErrorCode::ExpressionSyntax, what + " at column " + std::to_string(pos + 1) + " in '" + s + "'");
    }

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Fn expression() {
      Fn lhs = term();
      for (;;) {
        if (accept('+')) {
          Fn rhs = term();
          lhs = [lhs, rhs](const ExprVars& v) { return lhs(v) + rhs(v); };
        } else if (accept('-')) {
          Fn rhs = term();
          lhs = [lhs, rhs](const ExprVars& v) { return lhs(v) - rhs(v); };
        } else {
          return lhs;
        }
      }
    }

    Fn term() {
      Fn lhs = unary();
      for (;;) {
        if (accept('*')) {
          Fn rhs = unary();
          lhs = [lhs, rhs](const ExprVars& v) { return lhs(v) * rhs(v); };
        } else if (accept('/')) {
          Fn rhs = unary();
          lhs = [lhs, rhs](const ExprVars& v) { return lhs(v) / rhs(v); };
        } else {
          return lhs;
        }
      }
    }

    Fn unary() {
      if (accept('-')) {
        Fn arg = unary();
        return [arg](const ExprVars& v) { return -arg(v); };
      }
      if (accept('+')) return unary();
      return power();
    }

    Fn power() {
      Fn base = primary();
      if (accept('^')) {
        Fn exponent = unary();
        return [base, exponent](const ExprVars& v) { return std::pow(base(v), exponent(v)); };
      }
      return base;
    }

    Fn primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      if (accept('(')) {
        Fn inner = expression();
        expect(')');
        return inner;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
      fail(std::string("unexpected '") + c + "'");
    }

    Fn number() {
      const char* begin = s.c_str() + pos;
      char* end = nullptr;
      const double value = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos += static_cast<std::size_t>(end - begin);
      return [value](const ExprVars&) { return value; };
    }

    Fn identifier() {
      const std::size_t start = pos;
      while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
      const std::string name = s.substr(start, pos - start);
      skip();
      if (pos < s.size() && s[pos] == '(') {
        ++pos;
        std::vector<Fn> args;
        if (!accept(')')) {
          do args.push_back(expression());
          while (accept(','));
          expect(')');
        }
        return call(name, std::move(args));
      }
      if (name == "x" || name == "x1" || name == "y1") {
        note('x');
        return [](const ExprVars& v) { return v.x; };
      }
      if (name == "y" || name == "x2" || name == "y2") {
        note('y');
        return [](const ExprVars& v) { return v.y; };
      }
      if (name == "t") {
        note('t');
        return [](const ExprVars& v) { return v.t; };
      }
      if (name == "u") {
        note('u');
        return [](const ExprVars& v) { return v.u; };
      }
      if (name == "pi") return [](const ExprVars&) { return std::numbers::pi; };
      pos = start;
      fail("unknown identifier '" + name + "'");
    }

    void note(char variable) {
      if (uses.find(variable) == std::string::npos) uses.push_back(variable);
    }

    Fn call(const std::string& name, std::vector<Fn> a) {
      auto arity = [&](std::size_t n) {
        if (a.size() != n)
          fail(name + " expects " + std::to_string(n) + " argument" + (n == 1 ? "" : "s") + ", got " +
               std::to_string(a.size()));
      };
      using U = double (*)(double);
      static const std::pair<const char*, U> unary_table[] = {
          {"sin", [](double z) { return std::sin(z); }},   {"cos", [](double z) { return std::cos(z); }},
          {"tan", [](double z) { return std::tan(z); }},   {"exp", [](double z) { return std::exp(z); }},
          {"log", [](double z) { return std::log(z); }},   {"sqrt", [](double z) { return std::sqrt(z); }},
          {"abs", [](double z) { return std::abs(z); }},
          {"sign", [](double z) { return static_cast<double>((z > 0) - (z < 0)); }},
      };
      for (const auto& [n, f] : unary_table) {
        if (name == n) {
          arity(1);
          return [f, g = a[0]](const ExprVars& v) { return f(g(v)); };
        }
      }
      if (name == "min" || name == "max" || name == "pow") {
        arity(2);
        if (name == "min") return [l = a[0], r = a[1]](const ExprVars& v) { return std::min(l(v), r(v)); };
        if (name == "max") return [l = a[0], r = a[1]](const ExprVars& v) { return std::max(l(v), r(v)); };
        return [l = a[0], r = a[1]](const ExprVars& v) { return std::pow(l(v), r(v)); };
      }
      if (name == "ball") {
        arity(3);
        note('x');
        note('y');
        return [cx = a[0], cy = a[1], r = a[2]](const ExprVars& v) {
          const double dx = v.x - cx(v), dy = v.y - cy(v), rr = r(v);
          return dx * dx + dy * dy <= rr * rr ? 1.0 : 0.0;
        };
      }
      if (name == "rect") {
        arity(4);
        note('x');
        note('y');
        return [x0 = a[0], y0 = a[1], x1 = a[2], y1 = a[3]](const ExprVars& v) {
          return v.x >= x0(v) && v.x <= x1(v) && v.y >= y0(v) && v.y <= y1(v) ? 1.0 : 0.0;
        };
      }
      fail("unknown function '" + name + "'");
    }
  };

  std::string text_;
  Fn eval_;
  std::string uses_;
};

}  // namespace twoscale
