#include <cmath>
#include <random>

#include "doctest.h"
#include "fluidmc/agent.hpp"
#include "helpers.hpp"

using namespace fluidmc;

namespace {

int local(const AgentGenerator& g, const PopulationModel& m, const char* name) {
  const int s = *m.state_index(name);
  const auto& ls = g.local_states();
  return static_cast<int>(std::find(ls.begin(), ls.end(), s) - ls.begin());
}

}  // namespace

TEST_CASE("client generator matches the hand-derived rates") {
  const auto& m = testutil::client_model();
  auto g = testutil::client_generator();
  REQUIRE(g->size() == 4);
  const int rq = local(*g, m, "C_rq"), w = local(*g, m, "C_w"), rc = local(*g, m, "C_rc"), th = local(*g, m, "C_t");
  for (double t : {0.0, 0.5, 3.0, 17.0, 60.0, 250.0}) {
    auto x = g->trajectory().eval(t);
    auto q = g->at(t);
    const double crq = x[*m.state_index("C_rq")], srq = x[*m.state_index("S_rq")];
    const double cw = x[*m.state_index("C_w")], srp = x[*m.state_index("S_rp")];
    CHECK(q(rq, w) == doctest::Approx(1.0 * std::min(1.0, srq / crq)));
    const double wt = cw > 0 ? std::min(100.0, 100.0 * srp / cw) : (srp > 0 ? 100.0 : 0.0);
    CHECK(q(w, th) == doctest::Approx(wt));
    CHECK(q(w, rc) == doctest::Approx(0.01));
    CHECK(q(th, rq) == doctest::Approx(1.0));
    CHECK(q(rc, rq) == doctest::Approx(100.0));
    CHECK(q(rq, rc) == 0.0);
  }
}

TEST_CASE("generator rows sum to zero and off-diagonals are nonnegative") {
  auto g = testutil::client_generator();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, g->t_max());
  for (int i = 0; i < 1000; ++i) {
    auto q = g->at(u(rng));
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      CHECK(std::abs(q.row(r).sum()) <= 1e-12);
      for (Eigen::Index c = 0; c < q.cols(); ++c)
        if (c != r) CHECK(q(r, c) >= 0.0);
    }
  }
}

TEST_CASE("constant trajectory gives a constant generator") {
  const auto& m = testutil::client_model();
  std::vector<double> x0(8, 0.0);
  x0[*m.state_index("C_rq")] = 0.4;
  x0[*m.state_index("C_w")] = 0.2;
  x0[*m.state_index("S_rq")] = 0.1;
  x0[*m.state_index("S_rp")] = 0.3;
  auto traj = std::make_shared<FluidTrajectory>(FluidTrajectory::constant(x0, 10.0));
  AgentGenerator g(m, traj, tracked_states(m, *m.state_index("C_rq")));
  auto q0 = g.at(0.0);
  CHECK((g.at(7.3) - q0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(q0(local(g, m, "C_rq"), local(g, m, "C_w")) == doctest::Approx(0.25));
  CHECK(q0(local(g, m, "C_w"), local(g, m, "C_t")) == doctest::Approx(100.0));
}

TEST_CASE("two tracked agents jump one coordinate at a time") {
  const auto& m = testutil::client_model();
  AgentGenerator g2(m, testutil::client_trajectory(), tracked_states(m, *m.state_index("C_rq")), 2);
  auto g1 = testutil::client_generator();
  REQUIRE(g2.size() == 16);
  const int rq = local(*g1, m, "C_rq"), w = local(*g1, m, "C_w"), th = local(*g1, m, "C_t");
  for (double t : {1.0, 20.0, 80.0}) {
    auto q2 = g2.at(t);
    auto q1 = g1->at(t);
    CHECK(q2(g2.encode({rq, w}), g2.encode({w, w})) == doctest::Approx(q1(rq, w)));
    CHECK(q2(g2.encode({rq, w}), g2.encode({th, th})) == 0.0);
    // marginal of the first coordinate equals the single-agent generator
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        for (int other = 0; other < 4; ++other)
          CHECK(q2(g2.encode({a, other}), g2.encode({b, other})) == doctest::Approx(q1(a, b)));
      }
    for (Eigen::Index r = 0; r < q2.rows(); ++r) CHECK(std::abs(q2.row(r).sum()) < 1e-12);
  }
}
