#include <stdexcept>

#include "doctest.h"
#include "fluidmc/svg.hpp"

using namespace fluidmc;

TEST_CASE("empty series list is rejected") { CHECK_THROWS_AS(emit_svg({}), std::invalid_argument); }

TEST_CASE("mismatched lengths are rejected") {
  PlotSeries s{"a", {0, 1}, {0.5}};
  CHECK_THROWS_AS(emit_svg({s}), std::invalid_argument);
}

TEST_CASE("a constant series is a horizontal line") {
  PlotSeries s{"const", {0, 5, 10}, {0.25, 0.25, 0.25}};
  const auto doc = emit_svg({s});
  CHECK(doc.find("width=\"800\" height=\"600\"") != std::string::npos);
  const auto at = doc.find("<polyline points=\"");
  REQUIRE(at != std::string::npos);
  const auto end = doc.find('"', at + 18);
  const std::string pts = doc.substr(at + 18, end - at - 18);
  // every point has the same y coordinate
  std::vector<std::string> ys;
  std::size_t pos = 0;
  while (pos < pts.size()) {
    const auto comma = pts.find(',', pos);
    const auto space = pts.find(' ', comma);
    ys.push_back(pts.substr(comma + 1, space == std::string::npos ? std::string::npos : space - comma - 1));
    if (space == std::string::npos) break;
    pos = space + 1;
  }
  REQUIRE(ys.size() == 3);
  CHECK(ys[0] == ys[1]);
  CHECK(ys[1] == ys[2]);
  CHECK(doc.find(">const<") != std::string::npos);
}

TEST_CASE("output is deterministic and escapes labels") {
  PlotSeries a{"fluid <rq>", {0, 1, 2}, {1.0, 0.6, 0.5}};
  PlotSeries b{"ssa & co", {0, 1, 2}, {1.0, 0.58, 0.52}, {1.0, 0.55, 0.5}, {1.0, 0.61, 0.54}, true};
  PlotOptions o;
  o.title = "transient";
  const auto one = emit_svg({a, b}, o), two = emit_svg({a, b}, o);
  CHECK(one == two);
  CHECK(one.find("fluid &lt;rq&gt;") != std::string::npos);
  CHECK(one.find("ssa &amp; co") != std::string::npos);
  CHECK(one.find("<polygon") != std::string::npos);
  CHECK(one.find("stroke-dasharray") != std::string::npos);
}
