#include <cmath>

#include "doctest.h"
#include "fluidmc/csl.hpp"
#include "fluidmc/error.hpp"
#include "fluidmc/next.hpp"
#include "fluidmc/reach.hpp"
#include "helpers.hpp"

using namespace fluidmc;

namespace {

const Labelling& client_labels() {
  static const Labelling l = Labelling::load(testutil::source_path("models/client_labels.json"));
  return l;
}

TimeFunction scalar(std::function<double(double)> f, double a, double b) {
  return TimeFunction(1, {{a, b, [f](double t, std::span<double> out) { out[0] = f(t); }}});
}

std::size_t sign_changes(const TimeFunction& f, std::size_t s, double p, double a, double b, int points) {
  std::size_t count = 0;
  bool prev = f.eval(a, s) < p;
  for (int k = 1; k <= points; ++k) {
    const double t = a + (b - a) * k / points;
    const bool cur = f.eval(t, s) < p;
    if (cur != prev) ++count;
    prev = cur;
  }
  return count;
}

}  // namespace

TEST_CASE("parsing the time-out formula") {
  auto f = parse_csl("P<0.167 [ true U[0,50] timeout ]");
  REQUIRE(f->kind == CslNode::Kind::Until);
  CHECK(f->cmp == Comparison::Less);
  CHECK(f->p == doctest::Approx(0.167));
  CHECK(f->t1 == 0.0);
  CHECK(f->t2 == 50.0);
  CHECK(f->left->kind == CslNode::Kind::True);
  CHECK(f->right->kind == CslNode::Kind::Atom);
  CHECK(f->right->atom == "timeout");
}

TEST_CASE("parser precedence and structure") {
  auto f = parse_csl("!(a & b)");
  REQUIRE(f->kind == CslNode::Kind::Not);
  CHECK(f->left->kind == CslNode::Kind::And);

  // ! binds tighter than &, & tighter than |
  auto g = parse_csl("!a & b | c");
  REQUIRE(g->kind == CslNode::Kind::Or);
  REQUIRE(g->left->kind == CslNode::Kind::And);
  CHECK(g->left->left->kind == CslNode::Kind::Not);

  auto x = parse_csl("P>=0.1 [ X[1/2,3] wait ]");
  REQUIRE(x->kind == CslNode::Kind::Next);
  CHECK(x->t1 == 0.5);
  CHECK(x->cmp == Comparison::GreaterEq);

  auto nested = parse_csl("P<=0.9 [ true U[0,10] P<0.167 [ true U[0,50] timeout ] ]");
  REQUIRE(nested->right->kind == CslNode::Kind::Until);
  CHECK(time_depth(nested) == 60.0);
}

TEST_CASE("printing round-trips") {
  for (const char* text : {"P<0.167 [ true U[0,50] timeout ]", "!(a & b) | false", "P>0.25 [ X[0,1] (wait | think) ]",
                           "P<=1 [ !request U[2.5,7] P>0 [ X[0,1] wait ] ]"}) {
    auto f = parse_csl(text);
    CHECK_MESSAGE(structurally_equal(f, parse_csl(to_string(f))), text);
  }
}

TEST_CASE("parser errors") {
  CHECK_THROWS_AS(parse_csl("P>=1.5 [ true U[0,1] a ]"), DiagnosticError);
  CHECK_THROWS_AS(parse_csl("P<0.5 [ true U[3,1] a ]"), DiagnosticError);
  CHECK_THROWS_AS(parse_csl("a &"), DiagnosticError);
  CHECK_THROWS_AS(parse_csl("(a"), DiagnosticError);
  CHECK_THROWS_AS(parse_csl("P<0.5 [ a b ]"), DiagnosticError);
  CHECK_THROWS_AS(parse_csl("a $ b"), DiagnosticError);
  try {
    parse_csl("P<0.5 [ true U[0,1 a ]");
    FAIL("expected an error");
  } catch (const DiagnosticError& e) {
    CHECK(e.diagnostics().front().column == 20);
  }
}

TEST_CASE("threshold on a constant function") {
  auto f = TimeFunction::constant({0.3}, 0.0, 10.0);
  auto s = threshold(f, 0.5, Comparison::Less, 0.0, 10.0);
  CHECK(s.is_constant());
  CHECK(s.initial(0));
}

TEST_CASE("threshold locates a simple zero") {
  auto f = scalar([](double t) { return 1.0 - std::exp(-t); }, 0.0, 2.0);
  ThresholdReport rep;
  auto s = threshold(f, 0.5, Comparison::Greater, 0.0, 2.0, {}, &rep);
  REQUIRE(s.switches(0).size() == 1);
  CHECK(std::abs(s.switches(0)[0] - std::log(2.0)) <= 1e-9);
  CHECK_FALSE(s.initial(0));
  CHECK(s.contains(0, 1.0));
  REQUIRE(rep.crossings.size() == 1);
  CHECK(rep.crossings[0].derivative == doctest::Approx(0.5).epsilon(1e-4));
  CHECK_FALSE(rep.near_tangential());
}

TEST_CASE("threshold finds two close crossings") {
  // dips below p on a stretch much narrower than the coarse grid
  auto f = scalar([](double t) { return 0.5 + 1e5 * (t - 5.0) * (t - 5.0) - 1e-6; }, 0.0, 10.0);
  auto s = threshold(f, 0.5, Comparison::Less, 0.0, 10.0);
  // roots at 5 -+ sqrt(1e-11)
  CHECK(s.switches(0).size() == 2);
}

TEST_CASE("jumps across the bound switch the set at the jump") {
  TimeFunction f(1, {{0.0, 1.0, [](double, std::span<double> o) { o[0] = 0.2; }},
                     {1.0, 2.0, [](double, std::span<double> o) { o[0] = 0.8; }},
                     {2.0, 3.0, [](double, std::span<double> o) { o[0] = 0.7; }}});
  ThresholdReport rep;
  auto s = threshold(f, 0.5, Comparison::GreaterEq, 0.0, 3.0, {}, &rep);
  CHECK(s.switches(0) == std::vector<double>{1.0});
  REQUIRE(rep.crossings.size() == 1);
  CHECK(rep.crossings[0].jump);
}

TEST_CASE("tangential touch and plateau diagnostics") {
  auto touch = scalar([](double t) { return 0.5 + 0.1 * (t - 1.0) * (t - 1.0); }, 0.0, 2.0);
  ThresholdReport rep;
  auto s = threshold(touch, 0.5, Comparison::Greater, 0.0, 2.0, {}, &rep);
  CHECK(rep.near_tangential());
  CHECK(s.switches(0).size() <= 2);

  auto flat = scalar([](double t) { return t < 1.0 ? 0.2 + 0.3 * t : 0.5; }, 0.0, 2.0);
  ThresholdReport rep2;
  threshold(flat, 0.5, Comparison::Less, 0.0, 2.0, {}, &rep2);
  CHECK(rep2.plateau());

  // the bound met at the evaluation time is a hard error
  CHECK_THROWS_AS(threshold(flat, 0.5, Comparison::Less, 1.0, 2.0), NonRobust);
  auto start = scalar([](double t) { return 0.5 + t; }, 0.0, 1.0);
  CHECK_THROWS_AS(threshold(start, 0.5, Comparison::Less, 0.0, 1.0), NonRobust);
}

TEST_CASE("atoms come from the labelling") {
  auto g = testutil::client_generator();
  auto r = check(*g, client_labels(), parse_csl("timeout"), 0.0, 100.0);
  CHECK(r.truth.is_constant());
  CHECK(r.truth.at(0.0) == std::vector<bool>{false, false, true, false});
  CHECK(r.at_t0() == std::vector<bool>{false, false, true, false});
  // state names are atoms too
  auto r2 = check(*g, client_labels(), parse_csl("C_w | think"), 0.0, 1.0);
  CHECK(r2.truth.at(0.5) == std::vector<bool>{false, true, false, true});
  CHECK_THROWS_AS(check(*g, client_labels(), parse_csl("nonsense"), 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("labelling JSON errors") {
  CHECK_THROWS_AS(Labelling::from_json("[1,2]"), DiagnosticError);
  CHECK_THROWS_AS(Labelling::from_json("{\"a\": 3}"), DiagnosticError);
  CHECK_THROWS_AS(Labelling::from_json("{\"a\": [3]}"), DiagnosticError);
  CHECK_THROWS_AS(Labelling::from_json("{"), DiagnosticError);
}

TEST_CASE("time-out until: monotone truth with one switch at most") {
  auto g = testutil::client_generator();
  auto f = parse_csl("P<0.167 [ true U[0,50] timeout ]");
  auto r = check(*g, client_labels(), f, 0.0, 100.0);
  REQUIRE(r.probability.has_value());
  std::size_t total = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(r.truth.switches(s).size() <= 1);
    // switch count matches a dense scan of the same probability function
    CHECK(r.truth.switches(s).size() == sign_changes(*r.probability, s, 0.167, 0.0, 100.0, 100000));
    total += r.truth.switches(s).size();
  }
  CHECK(total >= 1);
  // the goal state satisfies the until at once
  CHECK_FALSE(r.truth.contains(2, 50.0));

  auto r3 = check(*g, client_labels(), parse_csl("P<0.3 [ true U[0,50] timeout ]"), 0.0, 100.0);
  for (std::size_t s = 0; s < 4; ++s) CHECK(r3.truth.switches(s).empty());
}

TEST_CASE("until from time zero equals the constant-set reachability") {
  auto g = testutil::client_generator();
  auto f = parse_csl("P<0.5 [ true U[0,50] timeout ]");
  auto p = probability_fn(*g, client_labels(), f, 0.0, 30.0);
  auto ref = reach_const(*g, {false, false, true, false}, {false, false, false, false}, 50.0, 0.0, 30.0);
  for (int k = 0; k <= 60; ++k) {
    const double t = 0.5 * k;
    for (std::size_t s = 0; s < 4; ++s) CHECK(std::abs(p.eval(t, s) - ref.eval(t, s)) <= 1e-8);
  }
}

TEST_CASE("delayed until composes a safety phase with a reachability phase") {
  auto g = testutil::client_generator();
  // stay out of wait for 5 time units, then reach timeout within a further 20
  auto f = parse_csl("P<0.5 [ !wait U[5,25] timeout ]");
  auto p = probability_fn(*g, client_labels(), f, 0.0, 10.0);
  const std::vector<bool> unsafe{false, true, false, false}, goal{false, false, true, false};
  auto second = reach_const(*g, goal, unsafe, 20.0, 0.0, 15.0);
  FunctionGenerator absorbing(
      4,
      [&](double t, Matrix& q) {
        g->eval(t, q);
        q.row(1).setZero();
      },
      g->breakpoints(), g->t_min(), g->t_max());
  for (double t : {0.0, 2.0, 5.0, 7.5, 10.0}) {
    const Matrix pi = forward(absorbing, t, t + 5.0).at(t + 5.0);
    const auto v = second.eval(t + 5.0);
    for (std::size_t s = 0; s < 4; ++s) {
      double ref = 0;
      for (std::size_t j = 0; j < 4; ++j)
        if (j != 1) ref += pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) * v[j];
      if (s == 1) ref = 0.0;
      CHECK_MESSAGE(std::abs(p.eval(t, s) - ref) <= 1e-7, "t=", t, " s=", s);
    }
  }
}

TEST_CASE("De Morgan holds exactly on truth sets") {
  auto g = testutil::client_generator();
  const char* a = "P<0.167 [ true U[0,50] timeout ]";
  const char* b = "P>0.3 [ X[0,1] wait ]";
  auto lhs = check(*g, client_labels(), parse_csl(std::string("!(") + a + " & " + b + ")"), 0.0, 60.0);
  auto rhs = check(*g, client_labels(), parse_csl(std::string("!") + a + " | !" + b), 0.0, 60.0);
  CHECK(lhs.truth == rhs.truth);
  auto lhs2 = check(*g, client_labels(), parse_csl(std::string("!(") + a + " | " + b + ")"), 0.0, 60.0);
  auto rhs2 = check(*g, client_labels(), parse_csl(std::string("!") + a + " & !" + b), 0.0, 60.0);
  CHECK(lhs2.truth == rhs2.truth);
}

TEST_CASE("next operator thresholds the next-state probability") {
  auto g = testutil::client_generator();
  auto r = check(*g, client_labels(), parse_csl("P>0.3 [ X[0,1] wait ]"), 0.0, 25.0);
  const auto goal = TimeVaryingSet::constant({false, true, false, false}, 0.0, 26.0);
  for (int k = 0; k < 100; ++k) {
    const double t = 25.0 * (k + 0.5) / 100.0;
    bool near_switch = false;
    for (std::size_t s = 0; s < 4; ++s)
      for (double w : r.truth.switches(s)) near_switch = near_switch || std::abs(w - t) < 1e-6;
    if (near_switch) continue;
    const auto p = next_at_all(*g, goal, t, 0.0, 1.0);
    for (std::size_t s = 0; s < 4; ++s) CHECK(r.truth.contains(s, t) == (p[s] > 0.3));
  }
}

TEST_CASE("nested until jumps only where the inner truth switches") {
  auto g = testutil::client_generator();
  const auto inner = parse_csl("P<0.167 [ true U[0,50] timeout ]");
  const double T = 60.0;
  auto inner_truth = check(*g, client_labels(), inner, 0.0, T + 30.0).truth;
  auto outer = probability_fn(*g, client_labels(), csl_until(Comparison::Less, 0.5, 0.0, T, csl_true(), inner), 0.0, 30.0);
  std::vector<double> allowed;
  for (double s : inner_truth.switch_times()) {
    allowed.push_back(s);
    allowed.push_back(s - T);
  }
  REQUIRE_FALSE(allowed.empty());
  for (const auto& j : outer.jumps(1e-9)) {
    bool ok = false;
    for (double b : allowed) ok = ok || std::abs(j.time - b) <= 1e-6;
    CHECK_MESSAGE(ok, "jump at ", j.time);
  }
}
