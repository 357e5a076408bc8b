#include "fluidmc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace fluidmc {

namespace {

constexpr double kWidth = 800, kHeight = 600;
constexpr double kLeft = 80, kRight = 200, kTop = 50, kBottom = 70;

const char* const kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// round step of 1, 2 or 5 times a power of ten giving about `target` ticks
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10 * mag;
}

}  // namespace

std::string emit_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts) {
  if (series.empty()) throw std::invalid_argument("emit_svg needs at least one series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' has mismatched x and y");
    if (!s.lo.empty() && (s.lo.size() != s.x.size() || s.hi.size() != s.x.size()))
      throw std::invalid_argument("series '" + s.label + "' has a band of the wrong length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
    for (double v : s.lo) y0 = std::min(y0, v);
    for (double v : s.hi) y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  // probabilities read best on [0, 1]
  if (y0 >= 0 && y1 <= 1) {
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1 - (y - y0) / (y1 - y0)) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
  if (!opts.title.empty())
    o += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" +
         escape(opts.title) + "</text>\n";

  // grid and ticks
  const double xs = nice_step(x1 - x0, 8), ys = nice_step(y1 - y0, 8);
  for (double v = std::ceil(x0 / xs - 1e-9) * xs; v <= x1 + 1e-9 * xs; v += xs) {
    const std::string X = fmt(px(v));
    o += "<line x1=\"" + X + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + X + "\" y2=\"" + fmt(kTop + ph) +
         "\" stroke=\"#e0e0e0\"/>\n";
    o += "<text x=\"" + X + "\" y=\"" + fmt(kTop + ph + 18) + "\" text-anchor=\"middle\">" + tick_label(v) +
         "</text>\n";
  }
  for (double v = std::ceil(y0 / ys - 1e-9) * ys; v <= y1 + 1e-9 * ys; v += ys) {
    const std::string Y = fmt(py(v));
    o += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + Y + "\" x2=\"" + fmt(kLeft + pw) + "\" y2=\"" + Y +
         "\" stroke=\"#e0e0e0\"/>\n";
    o += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(py(v) + 4) + "\" text-anchor=\"end\">" + tick_label(v) +
         "</text>\n";
  }
  o += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  o += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 20) + "\" text-anchor=\"middle\">" +
       escape(opts.x_label) + "</text>\n";
  o += "<text x=\"20\" y=\"" + fmt(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       fmt(kTop + ph / 2) + ")\">" + escape(opts.y_label) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kColours[k % (sizeof kColours / sizeof kColours[0])];
    if (!s.lo.empty() && !s.x.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) pts += fmt(px(s.x[i])) + "," + fmt(py(s.hi[i])) + " ";
      for (std::size_t i = s.x.size(); i-- > 0;) pts += fmt(px(s.x[i])) + "," + fmt(py(s.lo[i])) + " ";
      pts.pop_back();
      o += "<polygon points=\"" + pts + "\" fill=\"" + colour + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    o += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"" +
         (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    const double lx = kLeft + pw + 15;
    o += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(lx + 25) + "\" y2=\"" + fmt(ly) +
         "\" stroke=\"" + colour + "\" stroke-width=\"1.5\"" + (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    o += "<text x=\"" + fmt(lx + 32) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

}  // namespace fluidmc
