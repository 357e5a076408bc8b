#include <cmath>

#include "doctest.h"
#include "fluidmc/reach.hpp"
#include "helpers.hpp"

using namespace fluidmc;

namespace {

// local indices of the client chain: rq, w, rc, t
constexpr std::size_t RQ = 0, W = 1, RC = 2, TH = 3;

std::vector<bool> only(std::size_t i) {
  std::vector<bool> v(4, false);
  v[i] = true;
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("client local states are ordered rq, w, rc, t") {
  auto g = testutil::client_generator();
  CHECK(g->state_names() == std::vector<std::string>{"C_rq", "C_w", "C_rc", "C_t"});
}

TEST_CASE("two-state closed form and goal start") {
  Matrix q(2, 2);
  q << -1, 1, 0, 0;
  ConstantGenerator g(q);
  auto f = reach_const(g, {false, true}, {false, false}, std::log(2.0), 0.0, 3.0);
  for (double t : {0.0, 1.3, 3.0}) {
    CHECK(std::abs(f.eval(t, 0) - 0.5) <= 1e-8);
    CHECK(f.eval(t, 1) == 1.0);
  }
}

TEST_CASE("constant sets: anchored, two-sided and time-varying routes agree") {
  auto g = testutil::client_generator();
  std::vector<bool> goal = only(RC), unsafe = only(TH);
  auto a = reach_const(*g, goal, unsafe, 50.0, 0.0, 25.0);
  ReachOptions two;
  two.two_sided = true;
  auto b = reach_const(*g, goal, unsafe, 50.0, 0.0, 25.0, two);
  auto c = reach_tv(*g, TimeVaryingSet::constant(goal, 0.0, 400.0), TimeVaryingSet::constant(unsafe, 0.0, 400.0), 50.0,
                    0.0, 25.0);
  for (int k = 0; k <= 50; ++k) {
    const double t = 0.5 * k;
    CHECK(max_diff(a.eval(t), c.eval(t)) <= 1e-8);
    CHECK(max_diff(a.eval(t), b.eval(t)) <= 1e-6);
  }
}

TEST_CASE("reaching a timeout without a safe region") {
  auto g = testutil::client_generator();
  auto f = reach_const(*g, only(RC), std::vector<bool>(4, false), 50.0, 0.0, 100.0);
  // independent prototype values of the same chain
  CHECK(std::abs(f.eval(0.0, RQ) - 0.1816) < 2e-3);
  CHECK(std::abs(f.eval(0.0, W) - 0.2082) < 2e-3);
  CHECK(std::abs(f.eval(50.0, RQ) - 0.1410) < 2e-3);
  CHECK(std::abs(f.eval(100.0, TH) - 0.1223) < 2e-3);
  CHECK(f.eval(30.0, RC) == 1.0);
  // raw values never stray outside [0, 1] by more than the solver tolerance
  for (int k = 0; k <= 200; ++k)
    for (double v : f.raw(0.5 * k)) {
      CHECK(v >= -1e-9);
      CHECK(v <= 1 + 1e-9);
    }
}

TEST_CASE("monotone in the horizon for constant sets") {
  auto g = testutil::client_generator();
  auto goal = TimeVaryingSet::constant(only(RC), 0.0, 400.0);
  auto unsafe = TimeVaryingSet::constant(only(TH), 0.0, 400.0);
  auto h = reach_horizon(*g, goal, unsafe, 0.0, 250.0);
  std::vector<double> prev = h.eval(0.0);
  for (int k = 1; k <= 500; ++k) {
    auto cur = h.eval(0.5 * k);
    for (std::size_t i = 0; i < 4; ++i) CHECK(cur[i] >= prev[i] - 1e-10);
    prev = cur;
  }
  // horizon curve and initial-time curve agree where they meet
  auto f = reach_tv(*g, goal, unsafe, 120.0, 0.0, 10.0);
  CHECK(max_diff(f.eval(0.0), h.eval(120.0)) <= 1e-8);
}

TEST_CASE("time-varying sets against the explicit doubled-chain product") {
  auto g = testutil::client_generator();
  TimeVaryingSet goal(4, 0.0, 400.0), unsafe(4, 0.0, 400.0);
  goal.set(RC, true, {30.0, 42.0});
  goal.set(TH, false, {12.5, 20.0});
  unsafe.set(W, false, {35.0, 37.0});
  const double T = 10.0;
  auto f = reach_tv(*g, goal, unsafe, T, 0.0, 40.0);
  for (double t : {0.0, 1.0, 2.5, 3.0, 10.0, 12.5, 19.0, 20.0, 25.0, 27.0, 29.9, 30.0, 32.0, 36.0, 40.0}) {
    auto ref = reach_upsilon(*g, goal, unsafe, t, T);
    CHECK_MESSAGE(max_diff(f.eval(t), ref) <= 1e-8, "t=", t);
  }
  // jumps only where t or t + T meets a switch
  std::vector<double> allowed;
  for (double b : {30.0, 42.0, 12.5, 20.0, 35.0, 37.0}) {
    allowed.push_back(b);
    allowed.push_back(b - T);
  }
  for (const auto& j : f.jumps(1e-9)) {
    bool ok = false;
    for (double b : allowed) ok = ok || std::abs(j.time - b) < 1e-12;
    CHECK_MESSAGE(ok, "unexpected jump at ", j.time);
  }
  // dense scan away from boundaries finds no steps
  auto cuts = f.boundaries();
  for (int k = 0; k < 20000; ++k) {
    const double t = 40.0 * k / 20000.0, t2 = t + 40.0 / 20000.0;
    bool straddles = false;
    for (double c : cuts) straddles = straddles || (c > t && c <= t2);
    if (straddles) continue;
    CHECK(max_diff(f.eval(t), f.eval(t2)) < 5e-3);
  }
}

TEST_CASE("goal appearing inside the window makes the value jump by the occupation mass") {
  auto g = testutil::client_generator();
  TimeVaryingSet goal(4, 0.0, 400.0), unsafe(4, 0.0, 400.0);
  const double Ti = 30.0, T = 10.0;
  goal.set(TH, false, {Ti});
  auto f = reach_tv(*g, goal, unsafe, T, 0.0, 25.0);
  const double t = Ti - T;
  auto left = f.left_limit(t), right = f.eval(t);
  const Matrix pi = forward(*g, t, Ti).at(Ti);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s == TH) continue;
    CHECK(std::abs((right[s] - left[s]) - pi(static_cast<Eigen::Index>(s), TH)) <= 1e-7);
  }
  auto jumps = f.jumps(1e-9);
  REQUIRE(jumps.size() == 1);
  CHECK(jumps[0].time == t);
}

TEST_CASE("terminal values chain two phases") {
  auto g = testutil::client_generator();
  auto goal = TimeVaryingSet::constant(only(RC), 0.0, 400.0);
  auto none = TimeVaryingSet(4, 0.0, 400.0);
  // reaching rc within 30 equals: stay clear for 10 and then reach within 20,
  // or reach within the first 10
  auto whole = reach_tv(*g, goal, none, 30.0, 0.0, 5.0);
  auto second = reach_tv(*g, goal, none, 20.0, 10.0, 15.0);
  auto chained = reach_tv(*g, goal, none, 10.0, 0.0, 5.0, {}, &second);
  for (double t : {0.0, 2.0, 5.0}) CHECK(max_diff(whole.eval(t), chained.eval(t)) <= 1e-8);
}

TEST_CASE("overlap of goal and unsafe is reported and the goal wins") {
  Matrix q(2, 2);
  q << -1, 1, 1, -1;
  ConstantGenerator g(q);
  std::vector<std::string> warnings;
  ReachOptions o;
  o.warnings = &warnings;
  auto f = reach_const(g, {true, false}, {true, false}, 1.0, 0.0, 1.0, o);
  CHECK(!warnings.empty());
  CHECK(f.eval(0.5, 0) == 1.0);
}
