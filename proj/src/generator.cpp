#include "fluidmc/generator.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "fluidmc/error.hpp"

namespace fluidmc {

double Generator::t_max() const { return std::numeric_limits<double>::infinity(); }

void Generator::require_domain(double a, double b) const {
  const double slack = 1e-9 * std::max(1.0, std::abs(b));
  if (a < t_min() - slack || b > t_max() + slack) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "time window [%.10g, %.10g] exceeds generator domain [%.10g, %.10g]", a, b,
                  t_min(), t_max());
    throw DomainError(buf);
  }
}

std::vector<double> Generator::breakpoints_in(double a, double b) const {
  std::vector<double> out;
  for (double s : breakpoints())
    if (s > a && s < b) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> default_state_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("s" + std::to_string(i));
  return names;
}

ConstantGenerator::ConstantGenerator(Matrix q, std::vector<std::string> names)
    : q_(std::move(q)), names_(std::move(names)) {
  if (names_.empty()) names_ = default_state_names(static_cast<std::size_t>(q_.rows()));
}

FunctionGenerator::FunctionGenerator(std::size_t n, Fn fn, std::vector<double> breakpoints, double t_min,
                                     double t_max, std::vector<std::string> names)
    : n_(n), fn_(std::move(fn)), breaks_(std::move(breakpoints)), t_min_(t_min), t_max_(t_max),
      names_(std::move(names)) {
  std::sort(breaks_.begin(), breaks_.end());
  if (names_.empty()) names_ = default_state_names(n_);
}

void FunctionGenerator::eval(double t, Matrix& q) const {
  q.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  fn_(t, q);
}

}  // namespace fluidmc
