#pragma once

#include <string>
#include <vector>

namespace fluidmc {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  /// Optional confidence band drawn behind the line (same length as x).
  std::vector<double> lo, hi;
  bool dashed = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label = "t";
  std::string y_label = "probability";
};

/// 800x600 line chart with axes, ticks and a legend. The output depends only
/// on the input, so identical data gives byte-identical documents. Throws
/// std::invalid_argument for an empty series list or mismatched lengths.
std::string emit_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts = {});

}  // namespace fluidmc
