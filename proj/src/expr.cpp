#include "zubov/expr.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>

#include "zubov/errors.hpp"

namespace zubov {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

double pow_int_point(double base, int n) {
  double r = 1.0;
  double b = base;
  for (int e = n; e > 0; e >>= 1) {
    if (e & 1) r *= b;
    b *= b;
  }
  return r;
}

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::IntPow:
      return 4;
    default:
      return 5;  // atoms and function calls
  }
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Var: return "var";
    case Op::Neg: return "neg";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::IntPow: return "pow";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Max: return "max";
    case Op::Min: return "min";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::int32_t Expr::add_node(Node n) {
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

/// Fold-aware node builders. Folding is limited to constants and the
/// 0/1 identities; anything fancier would complicate structural tests.
struct ExprBuilder {
  Expr& e;

  bool is_const(std::int32_t i) const { return e.nodes_[static_cast<std::size_t>(i)].op == Op::Const; }
  bool is_const(std::int32_t i, double v) const {
    const auto& n = e.nodes_[static_cast<std::size_t>(i)];
    return n.op == Op::Const && n.value == v;
  }
  double cval(std::int32_t i) const { return e.nodes_[static_cast<std::size_t>(i)].value; }

  std::int32_t cst(double v) { return e.add_node({Op::Const, -1, -1, v, 0}); }

  std::int32_t add(std::int32_t a, std::int32_t b) {
    if (is_const(a) && is_const(b)) return cst(cval(a) + cval(b));
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return e.add_node({Op::Add, a, b, 0, 0});
  }

  std::int32_t sub(std::int32_t a, std::int32_t b) {
    if (is_const(a) && is_const(b)) return cst(cval(a) - cval(b));
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(b);
    return e.add_node({Op::Sub, a, b, 0, 0});
  }

  std::int32_t mul(std::int32_t a, std::int32_t b) {
    if (is_const(a) && is_const(b)) return cst(cval(a) * cval(b));
    if (is_const(a, 0.0) || is_const(b, 0.0)) return cst(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return e.add_node({Op::Mul, a, b, 0, 0});
  }

  std::int32_t div(std::int32_t a, std::int32_t b) {
    if (is_const(a) && is_const(b) && cval(b) != 0.0) return cst(cval(a) / cval(b));
    if (is_const(a, 0.0)) return cst(0.0);
    if (is_const(b, 1.0)) return a;
    return e.add_node({Op::Div, a, b, 0, 0});
  }

  std::int32_t neg(std::int32_t a) {
    if (is_const(a)) return cst(-cval(a));
    if (e.nodes_[static_cast<std::size_t>(a)].op == Op::Neg)
      return e.nodes_[static_cast<std::size_t>(a)].a;
    return e.add_node({Op::Neg, a, -1, 0, 0});
  }

  std::int32_t ipow(std::int32_t a, int n) {
    if (n == 0) return cst(1.0);
    if (n == 1) return a;
    if (is_const(a)) return cst(pow_int_point(cval(a), n));
    return e.add_node({Op::IntPow, a, -1, 0, n});
  }

  std::int32_t unary(Op op, std::int32_t a) {
    if (is_const(a)) {
      double v = cval(a);
      switch (op) {
        case Op::Sin: return cst(std::sin(v));
        case Op::Cos: return cst(std::cos(v));
        case Op::Tanh: return cst(std::tanh(v));
        case Op::Exp: return cst(std::exp(v));
        case Op::Log:
          if (v > 0.0) return cst(std::log(v));
          break;  // keep the node; evaluation reports the domain error
        case Op::Sqrt:
          if (v >= 0.0) return cst(std::sqrt(v));
          break;
        default: break;
      }
    }
    return e.add_node({op, a, -1, 0, 0});
  }

  std::int32_t binary(Op op, std::int32_t a, std::int32_t b) {
    switch (op) {
      case Op::Add: return add(a, b);
      case Op::Sub: return sub(a, b);
      case Op::Mul: return mul(a, b);
      case Op::Div: return div(a, b);
      case Op::Max:
      case Op::Min:
        if (is_const(a) && is_const(b))
          return cst(op == Op::Max ? std::max(cval(a), cval(b))
                                   : std::min(cval(a), cval(b)));
        return e.add_node({op, a, b, 0, 0});
      default:
        assert(false);
        return a;
    }
  }
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::string_view text, int dim, Expr& out)
      : text_(text), dim_(dim), e_(out) {}

  void run() {
    e_.dim_ = dim_;
    e_.root_ = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input", pos_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int dim_;
  Expr& e_;

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ParseError(msg, at);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r'))
      ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  bool eat(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::int32_t parse_expr() {
    std::int32_t lhs = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+' || c == '-') {
        ++pos_;
        std::int32_t rhs = parse_term();
        lhs = e_.add_node({c == '+' ? Op::Add : Op::Sub, lhs, rhs, 0, 0});
      } else {
        return lhs;
      }
    }
  }

  std::int32_t parse_term() {
    std::int32_t lhs = parse_factor();
    for (;;) {
      char c = peek();
      if (c == '*' || c == '/') {
        ++pos_;
        std::int32_t rhs = parse_factor();
        lhs = e_.add_node({c == '*' ? Op::Mul : Op::Div, lhs, rhs, 0, 0});
      } else {
        return lhs;
      }
    }
  }

  // factor := unary ('^' integer)?  — so '-' binds tighter than '^'.
  std::int32_t parse_factor() {
    std::int32_t base = parse_unary();
    if (peek() == '^') {
      ++pos_;
      skip_ws();
      std::size_t at = pos_;
      if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+'))
        fail("exponent must be a nonnegative integer", at);
      int exponent = 0;
      auto [p, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), exponent);
      if (ec != std::errc{} || p == text_.data() + pos_)
        fail("expected integer exponent after '^'", at);
      pos_ = static_cast<std::size_t>(p - text_.data());
      base = e_.add_node({Op::IntPow, base, -1, 0, exponent});
    }
    return base;
  }

  std::int32_t parse_unary() {
    if (peek() == '-') {
      ++pos_;
      std::int32_t a = parse_atom();
      return e_.add_node({Op::Neg, a, -1, 0, 0});
    }
    return parse_atom();
  }

  std::int32_t parse_atom() {
    char c = peek();
    std::size_t at = pos_;
    if (c == '(') {
      ++pos_;
      std::int32_t inner = parse_expr();
      if (!eat(')')) fail("expected ')'", pos_);
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return parse_identifier();
    fail(pos_ >= text_.size() ? "unexpected end of input" : "unexpected character", at);
  }

  std::int32_t parse_number() {
    std::size_t at = pos_;
    double value = 0.0;
    auto [p, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{} || p == text_.data() + pos_) fail("malformed number", at);
    pos_ = static_cast<std::size_t>(p - text_.data());
    return e_.add_node({Op::Const, -1, -1, value, 0});
  }

  std::int32_t parse_identifier() {
    std::size_t at = pos_;
    std::size_t end = pos_;
    while (end < text_.size() && ((text_[end] >= 'a' && text_[end] <= 'z') ||
                                  (text_[end] >= 'A' && text_[end] <= 'Z')))
      ++end;
    std::string_view name = text_.substr(pos_, end - pos_);

    if (name == "x" && end < text_.size() && text_[end] >= '0' && text_[end] <= '9') {
      pos_ = end;
      int index = 0;
      auto [p, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), index);
      if (ec != std::errc{}) fail("malformed variable index", pos_);
      pos_ = static_cast<std::size_t>(p - text_.data());
      if (index < 1 || index > dim_)
        fail("variable index out of range (have x1..x" + std::to_string(dim_) + ")", at);
      return e_.add_node({Op::Var, -1, -1, 0, index - 1});
    }
    pos_ = end;
    if (name == "pi") return e_.add_node({Op::Const, -1, -1, kPi, 0});

    Op op;
    int arity;
    if (name == "sin") { op = Op::Sin; arity = 1; }
    else if (name == "cos") { op = Op::Cos; arity = 1; }
    else if (name == "tanh") { op = Op::Tanh; arity = 1; }
    else if (name == "exp") { op = Op::Exp; arity = 1; }
    else if (name == "log") { op = Op::Log; arity = 1; }
    else if (name == "sqrt") { op = Op::Sqrt; arity = 1; }
    else if (name == "max") { op = Op::Max; arity = 2; }
    else if (name == "min") { op = Op::Min; arity = 2; }
    else fail("unknown identifier '" + std::string(name) + "'", at);

    if (!eat('(')) fail("expected '(' after function name", pos_);
    std::int32_t a = parse_expr();
    std::int32_t b = -1;
    if (arity == 2) {
      if (!eat(',')) fail(std::string(name) + " expects 2 arguments", pos_);
      b = parse_expr();
    } else if (peek() == ',') {
      fail(std::string(name) + " expects 1 argument", pos_);
    }
    if (!eat(')')) fail("expected ')'", pos_);
    return e_.add_node({op, a, b, 0, 0});
  }
};

Expr Expr::parse(std::string_view text, int dim) {
  if (dim < 0) throw ConfigError("expression dimension must be nonnegative");
  Expr e;
  e.nodes_.reserve(text.size() / 2 + 4);
  Parser p(text, dim, e);
  p.run();
  return e;
}

Expr Expr::constant(double v) {
  Expr e;
  e.root_ = e.add_node({Op::Const, -1, -1, v, 0});
  return e;
}

Expr Expr::variable(int index, int dim) {
  if (index < 0 || index >= dim) throw ConfigError("variable index out of range");
  Expr e;
  e.dim_ = dim;
  e.root_ = e.add_node({Op::Var, -1, -1, 0, index});
  return e;
}

// ---------------------------------------------------------------------------
// Evaluation

double Expr::eval(std::span<const double> x) const {
  std::vector<double> scratch;
  return eval(x, scratch);
}

double Expr::eval(std::span<const double> x, std::vector<double>& vals) const {
  if (static_cast<int>(x.size()) < dim_)
    throw EvalError("input has fewer coordinates than the expression dimension", "");
  vals.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const auto ia = static_cast<std::size_t>(n.a);
    const auto ib = static_cast<std::size_t>(n.b);
    switch (n.op) {
      case Op::Const: vals[i] = n.value; break;
      case Op::Var: vals[i] = x[static_cast<std::size_t>(n.aux)]; break;
      case Op::Neg: vals[i] = -vals[ia]; break;
      case Op::Add: vals[i] = vals[ia] + vals[ib]; break;
      case Op::Sub: vals[i] = vals[ia] - vals[ib]; break;
      case Op::Mul: vals[i] = vals[ia] * vals[ib]; break;
      case Op::Div:
        if (vals[ib] == 0.0) throw_eval_error("division by zero", static_cast<std::int32_t>(i));
        vals[i] = vals[ia] / vals[ib];
        break;
      case Op::IntPow: vals[i] = pow_int_point(vals[ia], n.aux); break;
      case Op::Sin: vals[i] = std::sin(vals[ia]); break;
      case Op::Cos: vals[i] = std::cos(vals[ia]); break;
      case Op::Tanh: vals[i] = std::tanh(vals[ia]); break;
      case Op::Exp: vals[i] = std::exp(vals[ia]); break;
      case Op::Log:
        if (vals[ia] <= 0.0)
          throw_eval_error("log of a nonpositive value", static_cast<std::int32_t>(i));
        vals[i] = std::log(vals[ia]);
        break;
      case Op::Sqrt:
        if (vals[ia] < 0.0)
          throw_eval_error("sqrt of a negative value", static_cast<std::int32_t>(i));
        vals[i] = std::sqrt(vals[ia]);
        break;
      case Op::Max: vals[i] = std::max(vals[ia], vals[ib]); break;
      case Op::Min: vals[i] = std::min(vals[ia], vals[ib]); break;
    }
  }
  return vals[static_cast<std::size_t>(root_)];
}

Interval Expr::eval(const Box& box) const {
  std::vector<Interval> scratch;
  return eval(box, scratch);
}

Interval Expr::eval(const Box& box, std::vector<Interval>& vals) const {
  if (box.size() < dim_)
    throw IntervalDomainError("box has fewer dimensions than the expression");
  vals.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const auto ia = static_cast<std::size_t>(n.a);
    const auto ib = static_cast<std::size_t>(n.b);
    switch (n.op) {
      case Op::Const: vals[i] = Interval{n.value}; break;
      case Op::Var: vals[i] = box.dims[static_cast<std::size_t>(n.aux)]; break;
      case Op::Neg: vals[i] = -vals[ia]; break;
      case Op::Add: vals[i] = vals[ia] + vals[ib]; break;
      case Op::Sub: vals[i] = vals[ia] - vals[ib]; break;
      case Op::Mul: vals[i] = vals[ia] * vals[ib]; break;
      case Op::Div: vals[i] = vals[ia] / vals[ib]; break;
      case Op::IntPow: vals[i] = pow_int(vals[ia], n.aux); break;
      case Op::Sin: vals[i] = zubov::sin(vals[ia]); break;
      case Op::Cos: vals[i] = zubov::cos(vals[ia]); break;
      case Op::Tanh: vals[i] = zubov::tanh(vals[ia]); break;
      case Op::Exp: vals[i] = zubov::exp(vals[ia]); break;
      case Op::Log: vals[i] = zubov::log(vals[ia]); break;
      case Op::Sqrt: vals[i] = zubov::sqrt(vals[ia]); break;
      case Op::Max: vals[i] = zubov::max(vals[ia], vals[ib]); break;
      case Op::Min: vals[i] = zubov::min(vals[ia], vals[ib]); break;
    }
  }
  return vals[static_cast<std::size_t>(root_)];
}

std::string Expr::path_to(std::int32_t target) const {
  std::vector<std::string> trail;
  std::function<bool(std::int32_t)> dfs = [&](std::int32_t i) -> bool {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    trail.push_back(op_name(n.op));
    if (i == target) return true;
    if (n.a >= 0 && dfs(n.a)) return true;
    if (n.b >= 0 && dfs(n.b)) return true;
    trail.pop_back();
    return false;
  };
  if (root_ >= 0) dfs(root_);
  std::string out;
  for (std::size_t i = 0; i < trail.size(); ++i) {
    if (i) out += '/';
    out += trail[i];
  }
  return out;
}

void Expr::throw_eval_error(const char* msg, std::int32_t node) const {
  throw EvalError(msg, path_to(node));
}

// ---------------------------------------------------------------------------
// Derivative

Expr Expr::derivative(int var) const {
  for (const Node& n : nodes_)
    if (n.op == Op::Max || n.op == Op::Min)
      throw NonDifferentiableError("expression contains min/max and has no derivative");

  Expr out;
  out.dim_ = dim_;
  ExprBuilder b{out};
  std::vector<std::int32_t> copies(nodes_.size(), -1);
  std::vector<std::int32_t> derivs(nodes_.size(), -1);

  std::function<std::int32_t(std::int32_t)> cp = [&](std::int32_t i) -> std::int32_t {
    auto iu = static_cast<std::size_t>(i);
    if (copies[iu] >= 0) return copies[iu];
    const Node& n = nodes_[iu];
    Node m = n;
    if (n.a >= 0) m.a = cp(n.a);
    if (n.b >= 0) m.b = cp(n.b);
    return copies[iu] = out.add_node(m);
  };

  std::function<std::int32_t(std::int32_t)> d = [&](std::int32_t i) -> std::int32_t {
    auto iu = static_cast<std::size_t>(i);
    if (derivs[iu] >= 0) return derivs[iu];
    const Node& n = nodes_[iu];
    std::int32_t r = -1;
    switch (n.op) {
      case Op::Const: r = b.cst(0.0); break;
      case Op::Var: r = b.cst(n.aux == var ? 1.0 : 0.0); break;
      case Op::Neg: r = b.neg(d(n.a)); break;
      case Op::Add: r = b.add(d(n.a), d(n.b)); break;
      case Op::Sub: r = b.sub(d(n.a), d(n.b)); break;
      case Op::Mul:
        r = b.add(b.mul(d(n.a), cp(n.b)), b.mul(cp(n.a), d(n.b)));
        break;
      case Op::Div:
        // (a'b - ab') / b^2
        r = b.div(b.sub(b.mul(d(n.a), cp(n.b)), b.mul(cp(n.a), d(n.b))),
                  b.ipow(cp(n.b), 2));
        break;
      case Op::IntPow:
        r = n.aux == 0 ? b.cst(0.0)
                       : b.mul(b.mul(b.cst(static_cast<double>(n.aux)),
                                     b.ipow(cp(n.a), n.aux - 1)),
                               d(n.a));
        break;
      case Op::Sin: r = b.mul(b.unary(Op::Cos, cp(n.a)), d(n.a)); break;
      case Op::Cos: r = b.neg(b.mul(b.unary(Op::Sin, cp(n.a)), d(n.a))); break;
      case Op::Tanh:
        r = b.mul(b.sub(b.cst(1.0), b.ipow(b.unary(Op::Tanh, cp(n.a)), 2)), d(n.a));
        break;
      case Op::Exp: r = b.mul(b.unary(Op::Exp, cp(n.a)), d(n.a)); break;
      case Op::Log: r = b.div(d(n.a), cp(n.a)); break;
      case Op::Sqrt:
        r = b.div(d(n.a), b.mul(b.cst(2.0), b.unary(Op::Sqrt, cp(n.a))));
        break;
      case Op::Max:
      case Op::Min:
        throw NonDifferentiableError("expression contains min/max and has no derivative");
    }
    return derivs[iu] = r;
  };

  out.root_ = d(root_);
  out.compact();
  return out;
}

void Expr::compact() {
  std::vector<bool> live(nodes_.size(), false);
  std::function<void(std::int32_t)> mark = [&](std::int32_t i) {
    auto iu = static_cast<std::size_t>(i);
    if (live[iu]) return;
    live[iu] = true;
    if (nodes_[iu].a >= 0) mark(nodes_[iu].a);
    if (nodes_[iu].b >= 0) mark(nodes_[iu].b);
  };
  if (root_ >= 0) mark(root_);

  std::vector<std::int32_t> remap(nodes_.size(), -1);
  std::vector<Node> packed;
  packed.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!live[i]) continue;
    Node n = nodes_[i];
    if (n.a >= 0) n.a = remap[static_cast<std::size_t>(n.a)];
    if (n.b >= 0) n.b = remap[static_cast<std::size_t>(n.b)];
    remap[i] = static_cast<std::int32_t>(packed.size());
    packed.push_back(n);
  }
  root_ = root_ >= 0 ? remap[static_cast<std::size_t>(root_)] : -1;
  nodes_ = std::move(packed);
}

std::int32_t Expr::import_subtree(const Expr& src, std::int32_t idx) {
  std::vector<std::int32_t> memo(src.nodes_.size(), -1);
  std::function<std::int32_t(std::int32_t)> go = [&](std::int32_t i) -> std::int32_t {
    auto iu = static_cast<std::size_t>(i);
    if (memo[iu] >= 0) return memo[iu];
    Node n = src.nodes_[iu];
    if (n.a >= 0) n.a = go(n.a);
    if (n.b >= 0) n.b = go(n.b);
    return memo[iu] = add_node(n);
  };
  return go(idx);
}

// ---------------------------------------------------------------------------
// Combinators

Expr operator+(const Expr& a, const Expr& b) { return Expr::apply(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::apply(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::apply(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::apply(Op::Div, a, b); }

Expr operator-(const Expr& a) {
  Expr out;
  out.dim_ = a.dim_;
  ExprBuilder bd{out};
  out.root_ = bd.neg(out.import_subtree(a, a.root_));
  out.compact();
  return out;
}

Expr Expr::apply(Op op, const Expr& a) {
  Expr out;
  out.dim_ = a.dim_;
  ExprBuilder bd{out};
  out.root_ = bd.unary(op, out.import_subtree(a, a.root_));
  out.compact();
  return out;
}

Expr Expr::apply(Op op, const Expr& a, const Expr& b) {
  Expr out;
  out.dim_ = std::max(a.dim_, b.dim_);
  ExprBuilder bd{out};
  std::int32_t ia = out.import_subtree(a, a.root_);
  std::int32_t ib = out.import_subtree(b, b.root_);
  out.root_ = bd.binary(op, ia, ib);
  out.compact();
  return out;
}

Expr Expr::pow(const Expr& a, int exponent) {
  if (exponent < 0) throw ConfigError("integer power exponent must be nonnegative");
  Expr out;
  out.dim_ = a.dim_;
  ExprBuilder bd{out};
  out.root_ = bd.ipow(out.import_subtree(a, a.root_), exponent);
  out.compact();
  return out;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

struct Renderer {
  const std::vector<Expr::Node>& nodes;

  std::string render(std::int32_t i) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::Const: return format_double(n.value);
      case Op::Var: return "x" + std::to_string(n.aux + 1);
      case Op::Neg: return "-" + child(n.a, /*need_atom=*/true);
      case Op::Add: return render(n.a) + " + " + right(n.b, 1);
      case Op::Sub: return render(n.a) + " - " + right(n.b, 1);
      case Op::Mul: return left(n.a, 2) + "*" + right(n.b, 2);
      case Op::Div: return left(n.a, 2) + "/" + right(n.b, 2);
      case Op::IntPow: {
        const auto& base = nodes[static_cast<std::size_t>(n.a)];
        bool parens = precedence(base.op) < 5 && base.op != Op::Neg;
        std::string s = render(n.a);
        if (parens) s = "(" + s + ")";
        return s + "^" + std::to_string(n.aux);
      }
      case Op::Max: return "max(" + render(n.a) + ", " + render(n.b) + ")";
      case Op::Min: return "min(" + render(n.a) + ", " + render(n.b) + ")";
      default: {
        std::string s(op_name(n.op));
        return s + "(" + render(n.a) + ")";
      }
    }
  }

  std::string child(std::int32_t i, bool need_atom) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    std::string s = render(i);
    if (need_atom && precedence(n.op) < 5) return "(" + s + ")";
    return s;
  }

  // Left operands keep their text when precedence allows left association.
  std::string left(std::int32_t i, int parent_prec) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    std::string s = render(i);
    if (precedence(n.op) < parent_prec) return "(" + s + ")";
    return s;
  }

  // Right operands are parenthesized on equal precedence so the printed
  // form reparses to the same tree (bitwise-identical evaluation).
  std::string right(std::int32_t i, int parent_prec) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    std::string s = render(i);
    if (precedence(n.op) <= parent_prec) return "(" + s + ")";
    return s;
  }

  std::string dump(std::int32_t i) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::Const: return format_double(n.value);
      case Op::Var: return "x" + std::to_string(n.aux + 1);
      case Op::IntPow:
        return "(pow " + dump(n.a) + " " + std::to_string(n.aux) + ")";
      default: {
        std::string s = "(";
        s += op_name(n.op);
        if (n.a >= 0) s += " " + dump(n.a);
        if (n.b >= 0) s += " " + dump(n.b);
        s += ")";
        return s;
      }
    }
  }
};

}  // namespace

std::string Expr::str() const {
  if (root_ < 0) return "";
  return Renderer{nodes_}.render(root_);
}

std::string Expr::dump() const {
  if (root_ < 0) return "";
  return Renderer{nodes_}.dump(root_);
}

}  // namespace zubov
