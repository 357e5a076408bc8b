#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fluidmc/next.hpp"
#include "helpers.hpp"

using namespace fluidmc;

namespace {

ConstantGenerator decay(double lambda) {
  Matrix q(2, 2);
  q << -lambda, lambda, 0, 0;
  return ConstantGenerator(q);
}

// P_next by quadrature: cumulative exit rate by the trapezoid rule on a fine
// grid, then the density integrated with Simpson's rule
double quadrature_next(const Generator& g, const TimeVaryingSet& goal, std::size_t s, double t0, double T1, double T2) {
  // cells never straddle a goal switch or the start of the window, so the
  // membership can be frozen at each cell's midpoint
  std::vector<double> edges{t0, t0 + T1, t0 + T2};
  for (double b : goal.switch_times())
    if (b > t0 && b < t0 + T2) edges.push_back(b);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const int steps = 200000;
  double lambda = 0.0, acc = 0.0;
  auto rate_out = [&](double t) { return -g.at(t)(s, s); };
  auto into = [&](double t, const std::vector<bool>& members) {
    Matrix q = g.at(t);
    double r = 0;
    for (std::size_t j = 0; j < members.size(); ++j)
      if (j != s && members[j]) r += q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
    return r;
  };
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double lo = edges[e], hi = edges[e + 1];
    const int cells = std::max(1, static_cast<int>(steps * (hi - lo) / T2));
    const double h = (hi - lo) / cells;
    const auto members = goal.at(0.5 * (lo + hi));
    const bool inside = lo >= t0 + T1;
    double prev_rate = rate_out(lo);
    for (int k = 0; k < cells; ++k) {
      const double a = lo + k * h, b = a + h, m = a + 0.5 * h;
      const double rm = rate_out(m), rb = rate_out(b);
      // Simpson on [a, b] for the cumulative rate at m and b
      const double lam_m = lambda + h / 24.0 * (5 * prev_rate + 8 * rm - rb);
      const double lam_b = lambda + h / 6.0 * (prev_rate + 4 * rm + rb);
      if (inside)
        acc += h / 6.0 *
               (into(a, members) * std::exp(-lambda) + 4 * into(m, members) * std::exp(-lam_m) +
                into(b, members) * std::exp(-lam_b));
      lambda = lam_b;
      prev_rate = rb;
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("empty goal gives zero") {
  auto g = decay(1.0);
  TimeVaryingSet empty(2, 0.0, 10.0);
  CHECK(next_at(g, empty, 0, 0.0, 0.0, 5.0) == 0.0);
}

TEST_CASE("homogeneous closed form") {
  auto g = decay(1.0);
  auto goal = TimeVaryingSet::constant({false, true}, 0.0, 10.0);
  CHECK(std::abs(next_at(g, goal, 0, 0.0, 0.0, std::log(2.0)) - 0.5) <= 1e-8);
  CHECK(std::abs(next_at(g, goal, 0, 3.0, 0.0, 2.0) - (1 - std::exp(-2.0))) <= 1e-8);
  // window [T1, T2]
  CHECK(std::abs(next_at(g, goal, 0, 0.0, 1.0, 2.0) - (std::exp(-1.0) - std::exp(-2.0))) <= 1e-8);
}

TEST_CASE("time-invariant chain gives a constant function") {
  auto g = decay(0.7);
  auto goal = TimeVaryingSet::constant({false, true}, 0.0, 20.0);
  auto f = next_fn(g, goal, 0.5, 3.0, 0.0, 10.0);
  const double v = next_at(g, goal, 0, 0.0, 0.5, 3.0);
  for (double t : {0.0, 2.5, 7.0, 10.0}) CHECK(std::abs(f.eval(t, 0) - v) < 1e-9);
}

TEST_CASE("client next-state probability against quadrature") {
  auto g = testutil::client_generator();
  auto goal = TimeVaryingSet::constant({false, true, false, false}, 0.0, 400.0);
  const double p = next_at(*g, goal, 0, 0.0, 0.0, 1.0);
  const double ref = quadrature_next(*g, goal, 0, 0.0, 0.0, 1.0);
  CHECK(std::abs(p - ref) <= 1e-6);
  CHECK(p > 0.3);
}

TEST_CASE("next as a function of the initial time matches pointwise values") {
  auto g = testutil::client_generator();
  auto goal = TimeVaryingSet::constant({false, true, false, false}, 0.0, 400.0);
  auto f = next_fn(*g, goal, 0.0, 1.0, 0.0, 25.0);
  for (int k = 0; k <= 25; ++k) {
    const double t = k;
    auto pts = next_at_all(*g, goal, t, 0.0, 1.0);
    auto v = f.eval(t);
    for (std::size_t s = 0; s < 4; ++s) CHECK(std::abs(v[s] - pts[s]) <= 1e-6);
  }
  CHECK(std::abs(f.eval(0.0, 0) - next_at(*g, goal, 0, 0.0, 0.0, 1.0)) <= 1e-9 + 1e-7);
}

TEST_CASE("window monotonicity and additivity") {
  auto g = testutil::client_generator();
  auto goal = TimeVaryingSet::constant({false, true, true, false}, 0.0, 400.0);
  for (double t0 : {0.0, 5.0, 40.0}) {
    auto a = next_at_all(*g, goal, t0, 0.2, 1.0);
    auto b = next_at_all(*g, goal, t0, 0.2, 1.5);
    auto c = next_at_all(*g, goal, t0, 1.0, 1.5);
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(b[s] >= a[s] - 1e-10);
      CHECK(std::abs(a[s] + c[s] - b[s]) <= 1e-8);
    }
  }
}

TEST_CASE("time-varying goal") {
  auto g = decay(1.0);
  TimeVaryingSet goal(2, 0.0, 10.0);
  goal.set(1, false, {1.0});  // target becomes a goal at t = 1
  // only jumps after t = 1 count: e^{-1} - e^{-3}
  CHECK(std::abs(next_at(g, goal, 0, 0.0, 0.0, 3.0) - (std::exp(-1.0) - std::exp(-3.0))) <= 1e-8);
  CHECK(std::abs(quadrature_next(g, goal, 0, 0.0, 0.0, 3.0) - (std::exp(-1.0) - std::exp(-3.0))) <= 1e-6);
  auto f = next_fn(g, goal, 0.0, 3.0, 0.0, 2.0);
  for (double t : {0.0, 0.5, 1.0, 1.5, 2.0}) CHECK(std::abs(f.eval(t, 0) - next_at(g, goal, 0, t, 0.0, 3.0)) <= 1e-7);
}
