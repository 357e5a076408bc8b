#include "fluidmc/expr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace fluidmc {

double safe_div(double a, double b) {
  if (b != 0.0) return a / b;
  if (a > 0.0) return std::numeric_limits<double>::infinity();
  if (a < 0.0) return -std::numeric_limits<double>::infinity();
  return 0.0;
}

ExprPtr Expr::literal(double v) { return Ptr(new Expr(Kind::Literal, v, -1, nullptr, nullptr)); }
ExprPtr Expr::var(int index) { return Ptr(new Expr(Kind::Var, 0.0, index, nullptr, nullptr)); }
ExprPtr Expr::param(int index) { return Ptr(new Expr(Kind::Param, 0.0, index, nullptr, nullptr)); }
ExprPtr Expr::unary(Kind k, Ptr a) { return Ptr(new Expr(k, 0.0, -1, std::move(a), nullptr)); }
ExprPtr Expr::binary(Kind k, Ptr a, Ptr b) {
  return Ptr(new Expr(k, 0.0, -1, std::move(a), std::move(b)));
}

double Expr::eval(std::span<const double> x, std::span<const double> params) const {
  switch (kind_) {
    case Kind::Literal: return value_;
    case Kind::Var: return x[static_cast<std::size_t>(index_)];
    case Kind::Param: return params[static_cast<std::size_t>(index_)];
    case Kind::Add: return a_->eval(x, params) + b_->eval(x, params);
    case Kind::Sub: return a_->eval(x, params) - b_->eval(x, params);
    case Kind::Mul: return a_->eval(x, params) * b_->eval(x, params);
    case Kind::Div: return safe_div(a_->eval(x, params), b_->eval(x, params));
    case Kind::Neg: return -a_->eval(x, params);
    case Kind::Min: return std::min(a_->eval(x, params), b_->eval(x, params));
    case Kind::Max: return std::max(a_->eval(x, params), b_->eval(x, params));
    case Kind::Pow: return std::pow(a_->eval(x, params), b_->eval(x, params));
    case Kind::Exp: return std::exp(a_->eval(x, params));
    case Kind::Log: return std::log(a_->eval(x, params));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

bool Expr::uses_var(int index) const {
  if (kind_ == Kind::Var) return index_ == index;
  return (a_ && a_->uses_var(index)) || (b_ && b_->uses_var(index));
}

void Expr::collect_vars(std::vector<int>& out) const {
  if (kind_ == Kind::Var) {
    if (std::find(out.begin(), out.end(), index_) == out.end()) out.push_back(index_);
    return;
  }
  if (a_) a_->collect_vars(out);
  if (b_) b_->collect_vars(out);
}

bool Expr::equal(const Ptr& a, const Ptr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind_ != b->kind_) return false;
  switch (a->kind_) {
    case Kind::Literal: return a->value_ == b->value_;
    case Kind::Var:
    case Kind::Param: return a->index_ == b->index_;
    default: return equal(a->a_, b->a_) && equal(a->b_, b->b_);
  }
}

namespace {

int precedence(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    default: return 4;
  }
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void render(const ExprPtr& e, const std::vector<std::string>& vars,
            const std::vector<std::string>& params, std::string& out) {
  using K = Expr::Kind;
  auto child = [&](const ExprPtr& c, int min_prec) {
    bool paren = precedence(c->kind()) < min_prec ||
                 (c->kind() == K::Literal && c->value() < 0.0);
    if (paren) out += '(';
    render(c, vars, params, out);
    if (paren) out += ')';
  };
  switch (e->kind()) {
    case K::Literal: out += format_number(e->value()); break;
    case K::Var: out += "x" + vars.at(static_cast<std::size_t>(e->index())); break;
    case K::Param: out += params.at(static_cast<std::size_t>(e->index())); break;
    case K::Add:
    case K::Sub:
      child(e->lhs(), 1);
      out += e->kind() == K::Add ? " + " : " - ";
      child(e->rhs(), 2);
      break;
    case K::Mul:
    case K::Div:
      child(e->lhs(), 2);
      out += e->kind() == K::Mul ? "*" : "/";
      child(e->rhs(), 3);
      break;
    case K::Neg:
      out += "-";
      child(e->lhs(), 3);
      break;
    case K::Min:
    case K::Max:
    case K::Pow:
      out += e->kind() == K::Min ? "min(" : e->kind() == K::Max ? "max(" : "pow(";
      render(e->lhs(), vars, params, out);
      out += ", ";
      render(e->rhs(), vars, params, out);
      out += ")";
      break;
    case K::Exp:
    case K::Log:
      out += e->kind() == K::Exp ? "exp(" : "log(";
      render(e->lhs(), vars, params, out);
      out += ")";
      break;
  }
}

bool is_one(const ExprPtr& e) { return e->kind() == Expr::Kind::Literal && e->value() == 1.0; }

ExprPtr mul(ExprPtr a, ExprPtr b) {
  if (is_one(a)) return b;
  if (is_one(b)) return a;
  return Expr::binary(Expr::Kind::Mul, std::move(a), std::move(b));
}

}  // namespace

std::string to_string(const ExprPtr& e, const std::vector<std::string>& var_names,
                      const std::vector<std::string>& param_names) {
  std::string out;
  render(e, var_names, param_names, out);
  return out;
}

ExprPtr factor_out(const ExprPtr& e, int i) {
  using K = Expr::Kind;
  switch (e->kind()) {
    case K::Var:
      return e->index() == i ? Expr::literal(1.0) : nullptr;
    case K::Mul: {
      if (auto fa = factor_out(e->lhs(), i)) return mul(fa, e->rhs());
      if (auto fb = factor_out(e->rhs(), i)) return mul(e->lhs(), fb);
      return nullptr;
    }
    case K::Add:
    case K::Sub: {
      auto fa = factor_out(e->lhs(), i);
      auto fb = factor_out(e->rhs(), i);
      if (!fa || !fb) return nullptr;
      return Expr::binary(e->kind(), fa, fb);
    }
    case K::Neg: {
      auto fa = factor_out(e->lhs(), i);
      return fa ? Expr::unary(K::Neg, fa) : nullptr;
    }
    case K::Div: {
      if (e->rhs()->uses_var(i)) return nullptr;
      auto fa = factor_out(e->lhs(), i);
      return fa ? Expr::binary(K::Div, fa, e->rhs()) : nullptr;
    }
    case K::Min:
    case K::Max: {
      auto fa = factor_out(e->lhs(), i);
      auto fb = factor_out(e->rhs(), i);
      if (!fa && !fb) return nullptr;
      if (!fa) fa = Expr::binary(K::Div, e->lhs(), Expr::var(i));
      if (!fb) fb = Expr::binary(K::Div, e->rhs(), Expr::var(i));
      return Expr::binary(e->kind(), fa, fb);
    }
    case K::Pow: {
      const auto& base = e->lhs();
      const auto& ex = e->rhs();
      if (base->kind() != K::Var || base->index() != i || ex->kind() != K::Literal ||
          ex->value() < 1.0)
        return nullptr;
      if (ex->value() == 1.0) return Expr::literal(1.0);
      return Expr::binary(K::Pow, base, Expr::literal(ex->value() - 1.0));
    }
    default:
      return nullptr;
  }
}

CompiledExpr::CompiledExpr(const ExprPtr& e) {
  emit(e);
  std::size_t depth = 0;
  for (const auto& op : ops_) {
    switch (op.kind) {
      case Expr::Kind::Literal:
      case Expr::Kind::Var:
      case Expr::Kind::Param: ++depth; break;
      case Expr::Kind::Neg:
      case Expr::Kind::Exp:
      case Expr::Kind::Log: break;
      default: --depth; break;
    }
    max_depth_ = std::max(max_depth_, depth);
  }
  if (max_depth_ > 64) throw std::invalid_argument("rate expression nested too deeply");
}

void CompiledExpr::emit(const ExprPtr& e) {
  if (e->lhs()) emit(e->lhs());
  if (e->rhs()) emit(e->rhs());
  ops_.push_back({e->kind(), e->value(), e->index()});
}

double CompiledExpr::eval(const double* x, const double* params) const {
  double stack[64];
  int sp = 0;
  for (const auto& op : ops_) {
    using K = Expr::Kind;
    switch (op.kind) {
      case K::Literal: stack[sp++] = op.value; break;
      case K::Var: stack[sp++] = x[op.index]; break;
      case K::Param: stack[sp++] = params[op.index]; break;
      case K::Neg: stack[sp - 1] = -stack[sp - 1]; break;
      case K::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case K::Log: stack[sp - 1] = std::log(stack[sp - 1]); break;
      default: {
        double b = stack[--sp];
        double& a = stack[sp - 1];
        switch (op.kind) {
          case K::Add: a = a + b; break;
          case K::Sub: a = a - b; break;
          case K::Mul: a = a * b; break;
          case K::Div: a = safe_div(a, b); break;
          case K::Min: a = std::min(a, b); break;
          case K::Max: a = std::max(a, b); break;
          case K::Pow: a = std::pow(a, b); break;
          default: break;
        }
      }
    }
  }
  return sp > 0 ? stack[0] : 0.0;
}

}  // namespace fluidmc
