#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zubov/interval.hpp"

namespace zubov {

enum class Op : std::uint8_t {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  IntPow,  // integer exponent >= 0, stored in Node::aux
  Sin,
  Cos,
  Tanh,
  Exp,
  Log,
  Sqrt,
  Max,
  Min,
};

/// Immutable scalar expression over variables x1..xn, stored as a flat
/// arena in topological order (children precede parents), so point and
/// interval evaluation are single linear passes with no recursion.
///
/// Grammar accepted by parse():
///   expr    := term (('+'|'-') term)*
///   term    := factor (('*'|'/') factor)*
///   factor  := unary ('^' integer)?
///   unary   := '-'? atom
///   atom    := number | 'pi' | var | func '(' expr (',' expr)? ')'
///            | '(' expr ')'
///   var     := 'x' digits          (1-based, x1..xn)
///   func    := sin cos tanh exp log sqrt min max   (min/max binary)
/// Note '-' binds tighter than '^': "-x1^2" is (-x1)^2. Write "-(x1^2)"
/// for the other reading.
class Expr {
 public:
  struct Node {
    Op op;
    std::int32_t a = -1;  // first child
    std::int32_t b = -1;  // second child
    double value = 0.0;   // Const payload
    std::int32_t aux = 0; // Var index (0-based) or IntPow exponent
  };

  Expr() = default;

  /// Parses `text` over dimension `dim`. Throws ParseError with the byte
  /// offset of the problem (syntax error, unknown identifier, variable
  /// index out of range, bad exponent).
  static Expr parse(std::string_view text, int dim);

  static Expr constant(double v);
  static Expr variable(int index, int dim);  // index is 0-based

  int dim() const { return dim_; }
  std::size_t node_count() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Point evaluation. Throws EvalError (with a root-to-node path) on
  /// division by zero, log of a nonpositive value, or sqrt of a negative
  /// value. The scratch overload avoids per-call allocation in hot loops;
  /// the scratch vector is resized as needed.
  double eval(std::span<const double> x) const;
  double eval(std::span<const double> x, std::vector<double>& scratch) const;

  /// Sound interval enclosure of the range over `box`: every defined point
  /// value lies inside the result. Throws IntervalDomainError only when an
  /// operand interval provably violates a domain.
  Interval eval(const Box& box) const;
  Interval eval(const Box& box, std::vector<Interval>& scratch) const;

  /// Exact partial derivative with respect to x_{var+1} (0-based `var`),
  /// with constant folding. Throws NonDifferentiableError if the
  /// expression contains min/max.
  Expr derivative(int var) const;

  /// Reparseable rendering; parse(str()) evaluates identically.
  std::string str() const;

  /// S-expression rendering for structural assertions in tests.
  std::string dump() const;

  // Combinators (used by tests and generated code); dimensions are merged.
  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  static Expr apply(Op op, const Expr& a);                  // unary funcs
  static Expr apply(Op op, const Expr& a, const Expr& b);   // min/max
  static Expr pow(const Expr& a, int exponent);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::int32_t root() const { return root_; }

 private:
  friend class Parser;
  friend struct ExprBuilder;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
  int dim_ = 0;

  std::int32_t add_node(Node n);
  std::int32_t import_subtree(const Expr& src, std::int32_t idx);
  void compact();
  [[noreturn]] void throw_eval_error(const char* msg, std::int32_t node) const;
  std::string path_to(std::int32_t node) const;
};

}  // namespace zubov
