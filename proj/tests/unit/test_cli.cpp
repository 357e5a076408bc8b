#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kModel = std::string(FLUIDMC_SOURCE_DIR) + "/models/client_server.pm";
const std::string kLabels = std::string(FLUIDMC_SOURCE_DIR) + "/models/client_labels.json";

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int c = fluidmc::cli::run(args, o, e);
  return {c, o.str(), e.str()};
}

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / ("fluidmc_cli_" + name)).string(); }

std::string write_tmp(const std::string& name, const std::string& text) {
  const auto p = tmp(name);
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST_CASE("validate is silent on a clean model") {
  const auto r = run({"validate", kModel});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  CHECK(r.err.empty());
}

TEST_CASE("validate reports located diagnostics with exit code 1") {
  const auto p = write_tmp("bad.pm", "states A B;\ninit A = 1;\ntransition t {\n  rules: A -> Q;\n  rate: xA;\n}\n");
  const auto r = run({"validate", p});
  CHECK(r.code == 1);
  CHECK(r.err.find(p + ":4:") != std::string::npos);
}

TEST_CASE("usage errors give exit code 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"nonsense"}).code == 1);
  CHECK(run({"reach", kModel, "--goal", "nope"}).code == 1);
  CHECK(run({"reach", kModel, "--goal", "rq"}).code == 0);  // resolved within the tracked class
  CHECK(run({"fluid", kModel, "--format", "xml"}).code == 1);
  CHECK(run({"reach", kModel, "--goal", "rc", "--t0-range", "5", "1"}).code == 1);
  const auto bad = run({"check", kModel, "--csl", "P<0.1 [ true U[0,5] timeout", "--out", tmp("x.csv")});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("--csl:1:28:") != std::string::npos);
}

TEST_CASE("help exits with 0") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("reach") != std::string::npos);
  CHECK(run({"reach", "--help"}).code == 0);
}

TEST_CASE("numerical failures give exit code 2") {
  // the drift of xA grows without bound, so the solve leaves the simplex or blows up
  const auto p = write_tmp("blowup.pm",
                           "states A B;\nparam k = 1;\ninit A = 1;\ntransition t {\n  rules: B -> A;\n  rate: "
                           "k / (1 - xA) ;\n}\ntransition u {\n  rules: A -> B;\n  rate: k * xA;\n}\n");
  const auto r = run({"fluid", p, "--t-max", "10"});
  INFO(r.err);
  CHECK(r.code == 2);
}

TEST_CASE("fluid output is a CSV with one column per state") {
  const auto r = run({"fluid", kModel, "--t-max", "10", "--points", "11"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 12);
  CHECK(l[0] == "t,C_rq,C_w,C_rc,C_t,S_rq,S_p,S_rp,S_l");
  CHECK(l[1].rfind("0,0.66666666666666663,0,0,0,0.33333333333333331", 0) == 0);
}

TEST_CASE("output files come with a metadata sidecar") {
  const auto out = tmp("reach.csv");
  fs::remove(out + ".json");
  const auto r = run({"reach", kModel, "--goal", "C_rc", "--horizon", "50", "--t0-range", "0", "10", "--points", "3",
                      "--out", out});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const auto csv = lines(slurp(out));
  REQUIRE(csv.size() == 1 + 3 * 4);
  CHECK(csv[0] == "t0,state,prob");
  const auto meta = nlohmann::json::parse(slurp(out + ".json"));
  CHECK(meta["tool"] == "fluidmc");
  CHECK(meta["command"] == "reach");
  CHECK(meta["flags"]["--goal"] == "C_rc");
  CHECK(meta["tolerances"]["rtol"].get<double>() == doctest::Approx(1e-10));
}

TEST_CASE("json and svg formats") {
  const auto j = run({"next", kModel, "--goal", "C_w", "--window", "0", "1", "--t0-range", "0", "5", "--points", "2",
                      "--format", "json"});
  REQUIRE(j.code == 0);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc["columns"].size() == 3);
  CHECK(doc["rows"].size() == 8);
  CHECK(doc["metadata"]["command"] == "next");
  const auto s = run({"fluid", kModel, "--t-max", "5", "--format", "svg"});
  REQUIRE(s.code == 0);
  CHECK(s.out.rfind("<svg", 0) == 0);
}

TEST_CASE("simulation commands are deterministic for a fixed seed") {
  const std::vector<std::string> a{"estimate", kModel, "--transient", "--N", "60", "--R", "200", "--t-max", "5",
                                   "--points", "6", "--seed", "7"};
  const auto r1 = run(a), r2 = run(a);
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  auto b = a;
  b.back() = "8";
  CHECK(run(b).out != r1.out);
  const auto sim = run({"simulate", kModel, "--N", "15", "--horizon", "3", "--seed", "3"});
  REQUIRE(sim.code == 0);
  CHECK(lines(sim.out)[1].rfind("0,start,10,0,0,0,5,0,0,0,C_rq", 0) == 0);
}

TEST_CASE("check prints truth at t0 and writes the truth intervals") {
  const auto out = tmp("check.csv");
  const auto r = run({"check", kModel, "--csl", "P<0.167 [ true U[0,50] timeout ]", "--labels", kLabels,
                      "--t0-range", "0", "100", "--out", out});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("C_rq") != std::string::npos);
  const auto csv = lines(slurp(out));
  CHECK(csv[0] == "state,from,to,truth");
  // every state's intervals tile [0, 100]
  CHECK(csv.size() >= 5);
  const auto meta = nlohmann::json::parse(slurp(out + ".json"));
  CHECK(meta["report"]["robust"] == true);
  CHECK(run({"check", kModel, "--csl", "timeout"}).code == 1);  // --out is required
}

TEST_CASE("compare enforces a discrepancy bound") {
  const std::vector<std::string> base{"compare", kModel, "--transient", "--N", "150", "--R", "300", "--t-max",
                                      "5", "--points", "6"};
  auto loose = base, tight = base;
  loose.insert(loose.end(), {"--max-discrepancy", "0.5"});
  tight.insert(tight.end(), {"--max-discrepancy", "0"});
  CHECK(run(loose).code == 0);
  const auto t = run(tight);
  CHECK(t.code == 1);
  CHECK(t.err.find("sup discrepancy") != std::string::npos);
}
