#include "fluidmc/next.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fluidmc/error.hpp"

namespace fluidmc {

namespace {

struct NextState {
  std::vector<double> prob;  // P at t0 + T2
  std::vector<double> L1;    // cumulative exit rate up to t0 + T1
  std::vector<double> L2;    // and up to t0 + T2
};

void check_window(double T1, double T2) {
  if (T1 < 0 || T2 < T1) throw std::invalid_argument("next-state window needs 0 <= T1 <= T2");
}

OdeOptions ode_options(const TransientOptions& o) {
  OdeOptions ode;
  ode.rtol = o.rtol;
  ode.atol = o.atol;
  return ode;
}

// rate from s into the members of `goal`, excluding s itself
double rate_into(const Matrix& q, std::size_t s, const std::vector<bool>& goal) {
  double r = 0;
  for (std::size_t j = 0; j < goal.size(); ++j)
    if (goal[j] && j != s) r += q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
  return r;
}

NextState next_state(const Generator& q, const TimeVaryingSet& goal, double t0, double T1, double T2,
                     const TransientOptions& opts) {
  check_window(T1, T2);
  q.require_domain(t0, t0 + T2);
  const std::size_t n = q.size();
  NextState out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  if (T2 == 0.0) return out;

  std::vector<bool> members(n, false);
  bool gate = false;
  Matrix qt;
  OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, qt);
    for (std::size_t s = 0; s < n; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      dy[s] = -qt(i, i);
      dy[n + s] = gate ? rate_into(qt, s, members) * std::exp(-y[s]) : 0.0;
    }
  };
  std::vector<double> stops = goal.switch_times();
  for (double b : q.breakpoints()) stops.push_back(b);
  stops.push_back(t0 + T1);
  std::vector<double> y0(2 * n, 0.0);
  auto dense = integrate_segments(rhs, t0, y0, t0 + T2, ode_options(opts), stops, [&](double a, double b) {
    const double mid = 0.5 * (a + b);
    gate = mid >= t0 + T1;
    members = goal.at(mid);
  });
  auto at1 = dense.eval(t0 + T1);
  const auto end = dense.back();
  for (std::size_t s = 0; s < n; ++s) {
    out.prob[s] = end[n + s];
    out.L1[s] = at1[s];
    out.L2[s] = end[s];
  }
  return out;
}

}  // namespace

std::vector<double> next_at_all(const Generator& q, const TimeVaryingSet& goal, double t0, double T1, double T2,
                                const TransientOptions& opts) {
  auto p = next_state(q, goal, t0, T1, T2, opts).prob;
  for (double& v : p) v = std::clamp(v, 0.0, 1.0);
  return p;
}

double next_at(const Generator& q, const TimeVaryingSet& goal, std::size_t s, double t0, double T1, double T2,
               const TransientOptions& opts) {
  return next_at_all(q, goal, t0, T1, T2, opts).at(s);
}

TimeFunction next_fn(const Generator& q, const TimeVaryingSet& goal, double T1, double T2, double t0, double t1,
                     const TransientOptions& opts) {
  check_window(T1, T2);
  if (t1 < t0) throw std::invalid_argument("next_fn needs t0 <= t1");
  q.require_domain(t0, t1 + T2);
  const std::size_t n = q.size();

  std::vector<double> breaks;
  {
    std::vector<double> b = goal.switch_times();
    for (double x : q.breakpoints()) b.push_back(x);
    for (double x : b)
      for (double shift : {0.0, T1, T2}) {
        const double t = x - shift;
        if (t > t0 && t < t1) breaks.push_back(t);
      }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  }

  // Integrate in decreasing t: the P equation grows with the exit rate when
  // run forward, so the stable direction is from t1 down to t0.
  const NextState start = next_state(q, goal, t1, T1, T2, opts);
  std::vector<double> y0(3 * n);
  for (std::size_t s = 0; s < n; ++s) {
    y0[s] = start.prob[s];
    y0[n + s] = start.L1[s];
    y0[2 * n + s] = start.L2[s];
  }
  std::vector<bool> g1(n), g2(n);
  Matrix q0, qa, qb;
  OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, q0);
    q.eval(t + T1, qa);
    q.eval(t + T2, qb);
    for (std::size_t s = 0; s < n; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      dy[s] = rate_into(qb, s, g2) * std::exp(-y[2 * n + s]) - rate_into(qa, s, g1) * std::exp(-y[n + s]) -
              q0(i, i) * y[s];
      dy[n + s] = q0(i, i) - qa(i, i);
      dy[2 * n + s] = q0(i, i) - qb(i, i);
    }
  };
  std::shared_ptr<DenseOutput> dense;
  if (T2 == T1) {
    dense = std::make_shared<DenseOutput>(3 * n);
    dense->start(t1, std::vector<double>(3 * n, 0.0));
  } else {
    dense = std::make_shared<DenseOutput>(
        integrate_segments(rhs, t1, y0, t0, ode_options(opts), breaks, [&](double a, double b) {
          const double mid = 0.5 * (a + b);
          g1 = goal.at(std::min(mid + T1, goal.t_end()));
          g2 = goal.at(std::min(mid + T2, goal.t_end()));
        }));
  }

  std::vector<double> cuts{t0};
  cuts.insert(cuts.end(), breaks.begin(), breaks.end());
  cuts.push_back(t1);
  std::vector<TimeFunction::Piece> pieces;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    pieces.push_back({cuts[k], cuts[k + 1], [dense, n](double t, std::span<double> out) {
                        std::vector<double> y(3 * n);
                        dense->eval(t, y);
                        std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
                      }});
  }
  return TimeFunction(n, std::move(pieces));
}

}  // namespace fluidmc
