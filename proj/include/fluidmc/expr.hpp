#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fluidmc {

/// Rate expressions over occupancy variables and named parameters.
///
/// Nodes are immutable and shared. Division follows a fixed convention so
/// that single-agent rates have a defined value on the simplex boundary:
/// a/0 is +inf for a > 0, -inf for a < 0 and 0 for a == 0. Inside a min this
/// reproduces the usual limit conventions for synchronised rates.
class Expr {
 public:
  enum class Kind { Literal, Var, Param, Add, Sub, Mul, Div, Neg, Min, Max, Pow, Exp, Log };

  using Ptr = std::shared_ptr<const Expr>;

  static Ptr literal(double v);
  static Ptr var(int index);
  static Ptr param(int index);
  static Ptr unary(Kind k, Ptr a);
  static Ptr binary(Kind k, Ptr a, Ptr b);

  Kind kind() const { return kind_; }
  double value() const { return value_; }
  int index() const { return index_; }
  const Ptr& lhs() const { return a_; }
  const Ptr& rhs() const { return b_; }

  double eval(std::span<const double> x, std::span<const double> params) const;

  bool uses_var(int index) const;
  /// Collects every distinct occupancy variable referenced.
  void collect_vars(std::vector<int>& out) const;

  /// Structural equality (literal values compared exactly).
  static bool equal(const Ptr& a, const Ptr& b);

 private:
  Expr(Kind k, double v, int idx, Ptr a, Ptr b)
      : kind_(k), value_(v), index_(idx), a_(std::move(a)), b_(std::move(b)) {}

  Kind kind_;
  double value_ = 0.0;
  int index_ = -1;
  Ptr a_;
  Ptr b_;
};

using ExprPtr = Expr::Ptr;

double safe_div(double a, double b);

/// Renders an expression in the model language; names resolve indices.
std::string to_string(const ExprPtr& e, const std::vector<std::string>& var_names,
                      const std::vector<std::string>& param_names);

/// Factors `e` as x_i * g and returns g, or nullptr when the expression is not
/// syntactically of that shape. Products drop one x_i factor, sums and
/// divisions by x_i-free denominators factor termwise, and min/max factor when
/// at least one branch carries the x_i factor (other branches are divided by
/// x_i).
ExprPtr factor_out(const ExprPtr& e, int i);

/// Flat stack-machine form of an expression for hot loops (simulation).
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const ExprPtr& e);
  double eval(const double* x, const double* params) const;

 private:
  struct Op {
    Expr::Kind kind;
    double value;
    int index;
  };
  void emit(const ExprPtr& e);
  std::vector<Op> ops_;
  std::size_t max_depth_ = 0;
};

}  // namespace fluidmc
