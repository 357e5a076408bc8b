#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fluidmc/fluid.hpp"
#include "helpers.hpp"

using namespace fluidmc;

TEST_CASE("drift at the initial occupancy") {
  const auto& m = testutil::client_model();
  DriftField F = build_drift(m);
  auto f = F.eval(m.init);
  CHECK(f[*m.state_index("C_rq")] == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  CHECK(f[*m.state_index("C_w")] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(f[*m.state_index("S_rq")] == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  CHECK(f[*m.state_index("C_t")] == 0.0);
}

TEST_CASE("drift conserves population on the simplex") {
  const auto& m = testutil::client_model();
  DriftField F = build_drift(m);
  for (const auto& x : simplex_samples(m, 1000)) {
    auto f = F.eval(x);
    CHECK(std::abs(std::accumulate(f.begin(), f.end(), 0.0)) < 1e-12);
  }
}

TEST_CASE("model without transitions stays put") {
  auto m = parse_model("states A B C; init A = 0.2; init B = 0.3; init C = 0.5;");
  DriftField F = build_drift(m);
  CHECK(F.eval(m.init) == std::vector<double>{0, 0, 0});
  auto traj = integrate_fluid(F, m.init, 10.0);
  for (double t : {0.0, 1.0, 5.5, 10.0}) CHECK(traj.eval(t) == m.init);
}

TEST_CASE("linear decay matches the closed form") {
  auto m = parse_model("states A B; init A = 1; transition d { rules: A -> B; rate: xA; }");
  auto traj = integrate_fluid(build_drift(m), m.init, 1.0);
  CHECK(std::abs(traj.eval(1.0, 0) - std::exp(-1.0)) < 1e-8);
  CHECK(std::abs(traj.eval(0.3, 0) - std::exp(-0.3)) < 1e-8);
}

TEST_CASE("client trajectory") {
  const auto& m = testutil::client_model();
  auto traj = testutil::client_trajectory();
  SUBCASE("simplex conservation") {
    double worst = 0;
    for (int i = 0; i <= 4000; ++i) {
      auto x = traj->dense().eval(traj->t_max() * i / 4000.0);
      worst = std::max(worst, std::abs(std::accumulate(x.begin(), x.end(), 0.0) - 1.0));
      for (double v : x) {
        CHECK(v >= -1e-9);
        CHECK(v <= 1 + 1e-9);
      }
    }
    CHECK(worst <= 1e-8);
  }
  SUBCASE("approaches a steady state") {
    auto a = traj->eval(90.0), b = traj->eval(100.0);
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    CHECK(d < 1e-2);
    auto f = build_drift(m).eval(traj->eval(400.0));
    for (double v : f) CHECK(std::abs(v) < 1e-4);
  }
  SUBCASE("switching events are isolated and signs stay fixed between them") {
    DriftField F = build_drift(m);
    auto ev = traj->event_times();
    for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i] - ev[i - 1] > 1e-10);
    std::vector<double> cuts{0.0};
    cuts.insert(cuts.end(), ev.begin(), ev.end());
    cuts.push_back(traj->t_max());
    for (std::size_t k = 0; k < F.n_switching(); ++k) {
      for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        int sign = 0;
        bool consistent = true;
        for (int j = 1; j < 100; ++j) {
          const double t = cuts[p] + (cuts[p + 1] - cuts[p]) * j / 100.0;
          const double g = F.switching(k, traj->dense().eval(t));
          if (std::abs(g) < 1e-9) continue;
          const int s = g > 0 ? 1 : -1;
          if (sign == 0) sign = s;
          if (s != sign) consistent = false;
        }
        CHECK_MESSAGE(consistent, "switching function ", F.switching_label(k), " between ", cuts[p], " and ",
                      cuts[p + 1]);
      }
    }
  }
  SUBCASE("halving the tolerances barely moves the endpoint") {
    FluidOptions coarse, fine;
    coarse.rtol = 1e-6;
    coarse.atol = 1e-8;
    fine.rtol = coarse.rtol / 2;
    fine.atol = coarse.atol / 2;
    auto a = integrate_fluid(build_drift(m), m.init, 100.0, coarse).eval(100.0);
    auto b = integrate_fluid(build_drift(m), m.init, 100.0, fine).eval(100.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 10 * coarse.rtol);
  }
}

TEST_CASE("a min of two crossing lines produces one event at the crossing") {
  // xA decays from 1 and xB grows, min(xA, xB) switches branch at t = ln 2
  auto m = parse_model(
      "states A B C; param s = 1; init A = 1;"
      "transition d { rules: A -> B; rate: xA; }"
      "transition z { rules: C -> B; rate: 0*min(xA, xB) + xC; }");
  auto traj = integrate_fluid(build_drift(m), m.init, 2.0);
  REQUIRE(traj.events().size() == 1);
  CHECK(std::abs(traj.events()[0].time - std::log(2.0)) < 1e-8);
}

TEST_CASE("trajectory rejects reads outside its horizon") {
  auto traj = FluidTrajectory::constant({1.0, 0.0}, 5.0);
  CHECK_THROWS(traj.eval(6.0));
  CHECK(traj.eval(5.0) == std::vector<double>{1.0, 0.0});
}
