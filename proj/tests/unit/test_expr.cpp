#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fluidmc/expr.hpp"

using namespace fluidmc;
using K = Expr::Kind;

TEST_CASE("division convention on zero denominators") {
  CHECK(safe_div(1.0, 0.0) == std::numeric_limits<double>::infinity());
  CHECK(safe_div(-2.0, 0.0) == -std::numeric_limits<double>::infinity());
  CHECK(safe_div(0.0, 0.0) == 0.0);
  CHECK(safe_div(3.0, 2.0) == 1.5);
}

TEST_CASE("evaluation and compiled form agree") {
  // min(2*x0, x1/x0) + exp(-x1)
  auto e = Expr::binary(K::Add,
                        Expr::binary(K::Min, Expr::binary(K::Mul, Expr::literal(2), Expr::var(0)),
                                     Expr::binary(K::Div, Expr::var(1), Expr::var(0))),
                        Expr::unary(K::Exp, Expr::unary(K::Neg, Expr::var(1))));
  CompiledExpr c(e);
  for (double a : {0.0, 0.1, 0.5, 0.9})
    for (double b : {0.0, 0.3, 1.0}) {
      std::vector<double> x{a, b};
      CHECK(c.eval(x.data(), nullptr) == doctest::Approx(e->eval(x, {})).epsilon(1e-15));
    }
}

TEST_CASE("factoring out an occupancy variable") {
  auto k = Expr::param(0);
  std::vector<double> p{3.0};
  SUBCASE("product") {
    auto f = factor_out(Expr::binary(K::Mul, k, Expr::var(1)), 1);
    REQUIRE(f);
    CHECK(f->eval(std::vector<double>{0.2, 0.7}, p) == 3.0);
  }
  SUBCASE("min with one factored branch divides the other") {
    auto e = Expr::binary(K::Min, Expr::binary(K::Mul, k, Expr::var(0)), Expr::var(1));
    auto f = factor_out(e, 0);
    REQUIRE(f);
    std::vector<double> x{0.25, 0.5};
    CHECK(x[0] * f->eval(x, p) == doctest::Approx(e->eval(x, p)));
  }
  SUBCASE("absent variable") { CHECK_FALSE(factor_out(Expr::binary(K::Mul, k, Expr::var(1)), 0)); }
  SUBCASE("sum with one unfactorable term") {
    CHECK_FALSE(factor_out(Expr::binary(K::Add, Expr::var(0), Expr::var(1)), 0));
  }
  SUBCASE("power") {
    auto f = factor_out(Expr::binary(K::Pow, Expr::var(0), Expr::literal(3)), 0);
    REQUIRE(f);
    CHECK(f->eval(std::vector<double>{0.5}, p) == doctest::Approx(0.25));
  }
}

TEST_CASE("printing uses minimal parentheses") {
  std::vector<std::string> vars{"A", "B"}, params{"k"};
  auto e = Expr::binary(K::Mul, Expr::param(0), Expr::binary(K::Sub, Expr::var(0), Expr::var(1)));
  CHECK(to_string(e, vars, params) == "k*(xA - xB)");
  auto m = Expr::binary(K::Min, Expr::var(0), Expr::literal(0.5));
  CHECK(to_string(m, vars, params) == "min(xA, 0.5)");
}
