#include <cmath>
#include <string>

#include "doctest.h"
#include "fluidmc/error.hpp"
#include "fluidmc/model.hpp"
#include "helpers.hpp"

using namespace fluidmc;

namespace {

std::vector<Diagnostic> parse_errors(const std::string& text) {
  try {
    parse_model(text);
  } catch (const DiagnosticError& e) {
    return e.diagnostics();
  }
  return {};
}

bool mentions(const std::vector<Diagnostic>& d, const std::string& needle) {
  for (const auto& x : d)
    if (x.message.find(needle) != std::string::npos) return true;
  return false;
}

const char* kTwoState = R"(
states A B;
param k = 2;
init A = 1;
transition go { rules: A -> B; rate: k * xA; }
)";

}  // namespace

TEST_CASE("client-server model parses with 8 states and 9 transitions") {
  const auto& m = testutil::client_model();
  CHECK(m.n_states() == 8);
  CHECK(m.transitions.size() == 9);
  CHECK(m.param_values[*m.param_index("k_r")] == 1.0);
  CHECK(m.param_values[*m.param_index("k_w")] == 100.0);
  CHECK(m.param_values[*m.param_index("k_sto")] == 0.005);
  CHECK(m.init[*m.state_index("C_rq")] == doctest::Approx(2.0 / 3.0));
  CHECK(validate(m).empty());
}

TEST_CASE("request transition has the synchronised update vector") {
  const auto& m = testutil::client_model();
  const auto v = m.transitions[0].update_vector(m.n_states());
  CHECK(v[*m.state_index("C_rq")] == -1);
  CHECK(v[*m.state_index("C_w")] == 1);
  CHECK(v[*m.state_index("S_rq")] == -1);
  CHECK(v[*m.state_index("S_p")] == 1);
}

TEST_CASE("update vectors conserve population") {
  for (const auto& tr : testutil::client_model().transitions) {
    int sum = 0;
    for (int v : tr.update_vector(8)) sum += v;
    CHECK(sum == 0);
  }
}

TEST_CASE("empty transition block is a valid vacuous model") {
  auto m = parse_model("states A B; init A = 1;");
  CHECK(m.transitions.empty());
  CHECK(validate(m).empty());
}

TEST_CASE("parse errors carry locations") {
  SUBCASE("self-loop") {
    auto d = parse_errors("states A B;\ntransition t { rules: A -> A; rate: xA; }");
    REQUIRE(!d.empty());
    CHECK(mentions(d, "self-loop rule rejected"));
    CHECK(d[0].line == 2);
  }
  SUBCASE("birth and death") {
    CHECK(mentions(parse_errors("states A; transition t { rules: \xE2\x88\x85 -> A; rate: 1; }"), "no birth/death"));
    CHECK(mentions(parse_errors("states A; transition t { rules: A -> \xE2\x88\x85; rate: 1; }"), "no birth/death"));
  }
  SUBCASE("undeclared identifier") { CHECK(mentions(parse_errors("states A B; transition t { rules: A -> B; rate: k*xA; }"), "k")); }
  SUBCASE("duplicates") {
    CHECK(mentions(parse_errors("states A A;"), "duplicate state"));
    CHECK(mentions(parse_errors("states A B; transition t { rules: A->B; rate: xA; } transition t { rules: B->A; rate: xB; }"),
                   "duplicate transition"));
  }
  SUBCASE("syntax") { CHECK(!parse_errors("states A B; transition t { rules A -> B; }").empty()); }
  SUBCASE("class crossing") {
    CHECK(mentions(parse_errors("states A B; class c = A; class d = B; transition t { rules: A -> B; rate: xA; }"),
                   "class"));
  }
}

TEST_CASE("validation diagnostics") {
  SUBCASE("occupancy must sum to one") {
    auto m = parse_model("states A B; init A = 0.5; init B = 0.4;");
    auto d = validate(m);
    CHECK(mentions(d, "occupancy sums to 0.9"));
  }
  SUBCASE("negative rate") {
    auto m = parse_model("states A B; param k = 1; init A = 1; transition t { rules: A -> B; rate: -k*xA; }");
    CHECK(mentions(validate(m), "negative rate at sample point"));
  }
}

TEST_CASE("single-agent rates") {
  const auto& m = testutil::client_model();
  const std::vector<double>& p = m.param_values;
  SUBCASE("think factors to k_t") {
    auto rates = single_agent_rates(m, *m.state_index("C_t"));
    REQUIRE(rates.size() == 1);
    std::vector<double> x(8, 0.1);
    CHECK(rates[0].eval(x, p) == doctest::Approx(1.0));
    CHECK(rates[0].auto_factored);
  }
  SUBCASE("reply uses the declared form and its boundary values") {
    auto rates = single_agent_rates(m, *m.state_index("C_w"));
    const SingleAgentRate* reply = nullptr;
    for (const auto& r : rates)
      if (m.transitions[r.transition].name == "reply") reply = &r;
    REQUIRE(reply);
    std::vector<double> x(8, 0.0);
    const auto cw = *m.state_index("C_w"), srp = *m.state_index("S_rp");
    x[cw] = 0.2;
    x[srp] = 0.1;
    CHECK(reply->eval(x, p) == doctest::Approx(std::min(100.0, 100.0 * 0.1 / 0.2)));
    x[cw] = 0.5;
    x[srp] = 0.001;
    CHECK(reply->eval(x, p) == doctest::Approx(0.2));
    x[cw] = 0.0;
    x[srp] = 0.0;
    CHECK(reply->eval(x, p) == 0.0);
    x[srp] = 0.1;
    CHECK(reply->eval(x, p) == 100.0);
  }
  SUBCASE("request from a client factors through the min") {
    auto rates = single_agent_rates(m, *m.state_index("C_rq"));
    REQUIRE(rates.size() == 1);
    std::vector<double> x(8, 0.0);
    x[*m.state_index("C_rq")] = 0.5;
    x[*m.state_index("S_rq")] = 0.1;
    CHECK(rates[0].eval(x, p) == doctest::Approx(0.2));
    x[*m.state_index("C_rq")] = 0.0;
    CHECK(rates[0].eval(x, p) == 1.0);
  }
  SUBCASE("missing factor is incompatible") {
    auto m2 = parse_model("states A B C; param k = 1; init A = 1; transition t { rules: A -> B; rate: k*xB; }");
    CHECK_THROWS_AS(single_agent_rates(m2, 0), NotSingleAgentCompatible);
  }
  SUBCASE("multiplicity is carried") {
    auto m2 = parse_model("states A B; init A = 1; transition t { rules: A -> B *2; rate: xA*xA; }");
    auto rates = single_agent_rates(m2, 0);
    REQUIRE(rates.size() == 1);
    CHECK(rates[0].multiplicity == 2);
  }
}

TEST_CASE("factorisation holds on simplex samples") {
  const auto& m = testutil::client_model();
  auto samples = simplex_samples(m, 1000);
  CHECK(samples.size() >= 1000);
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (const auto& r : single_agent_rates(m, static_cast<int>(s))) {
      const auto& tr = m.transitions[r.transition];
      for (const auto& x : samples) {
        if (x[s] <= 1e-6) continue;
        const double f = tr.rate->eval(x, m.param_values);
        CHECK(std::abs(x[s] * r.eval(x, m.param_values) - f) <= 1e-9 * (1 + std::abs(f)));
      }
    }
  }
}

TEST_CASE("print and parse round trip") {
  for (const std::string& text : {std::string(kTwoState), std::string()}) {
    const PopulationModel m = text.empty() ? testutil::client_model() : parse_model(text);
    auto printed = print_model(m);
    auto again = parse_model(printed);
    CHECK(structurally_equal(m, again));
    CHECK(print_model(again) == printed);
  }
}
