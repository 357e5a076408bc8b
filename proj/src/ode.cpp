#include "fluidmc/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fluidmc/error.hpp"

namespace fluidmc {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// continuous extension
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace

// ---------------------------------------------------------------------------

void DenseOutput::start(double t0, std::span<const double> y0) {
  t_begin_ = t_end_ = t0;
  first_.assign(y0.begin(), y0.end());
  last_ = first_;
  dim_ = y0.size();
}

void DenseOutput::push_step(double t, double h, std::span<const double> y0, std::span<const double> y1,
                            std::span<const double> k1, std::span<const double> k3, std::span<const double> k4,
                            std::span<const double> k5, std::span<const double> k6, std::span<const double> k7) {
  if (h_.empty() && t_.empty()) {
    if (first_.empty()) start(t, y0);
  }
  t_.push_back(t);
  h_.push_back(h);
  const std::size_t base = coef_.size();
  coef_.resize(base + 5 * dim_);
  double* r1 = coef_.data() + base;
  double* r2 = r1 + dim_;
  double* r3 = r2 + dim_;
  double* r4 = r3 + dim_;
  double* r5 = r4 + dim_;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double ydiff = y1[i] - y0[i];
    const double bspl = h * k1[i] - ydiff;
    r1[i] = y0[i];
    r2[i] = ydiff;
    r3[i] = bspl;
    r4[i] = ydiff - h * k7[i] - bspl;
    r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
  }
  t_end_ = t + h;
  last_.assign(y1.begin(), y1.end());
}

void DenseOutput::append(const DenseOutput& other) {
  if (other.h_.empty()) return;
  if (first_.empty()) start(other.t_begin_, other.first_);
  t_.insert(t_.end(), other.t_.begin(), other.t_.end());
  h_.insert(h_.end(), other.h_.begin(), other.h_.end());
  coef_.insert(coef_.end(), other.coef_.begin(), other.coef_.end());
  t_end_ = other.t_end_;
  last_ = other.last_;
}

std::size_t DenseOutput::locate(double t) const {
  const std::size_t n = t_.size();
  if (n <= 1) return 0;
  const bool forward = h_[0] > 0;
  // first index whose step start is beyond t, minus one
  std::size_t lo = 0, hi = n;
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    bool before = forward ? t_[mid] <= t : t_[mid] >= t;
    if (before)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

void DenseOutput::eval(double t, std::span<double> out) const {
  if (h_.empty()) {
    std::copy(first_.begin(), first_.end(), out.begin());
    return;
  }
  const std::size_t k = locate(t);
  const double h = h_[k];
  const double th = (t - t_[k]) / h;
  const double th1 = 1.0 - th;
  const double* r1 = coef_.data() + 5 * dim_ * k;
  const double* r2 = r1 + dim_;
  const double* r3 = r2 + dim_;
  const double* r4 = r3 + dim_;
  const double* r5 = r4 + dim_;
  for (std::size_t i = 0; i < dim_; ++i)
    out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
}

double DenseOutput::eval(double t, std::size_t i) const {
  if (h_.empty()) return first_[i];
  const std::size_t k = locate(t);
  const double th = (t - t_[k]) / h_[k];
  const double th1 = 1.0 - th;
  const double* r = coef_.data() + 5 * dim_ * k;
  return r[i] + th * (r[dim_ + i] + th1 * (r[2 * dim_ + i] + th * (r[3 * dim_ + i] + th1 * r[4 * dim_ + i])));
}

std::vector<double> DenseOutput::eval(double t) const {
  std::vector<double> out(dim_);
  eval(t, out);
  return out;
}

// ---------------------------------------------------------------------------

Dopri5::Dopri5(OdeRhs rhs, std::size_t dim, OdeOptions opts)
    : rhs_(std::move(rhs)), n_(dim), opts_(opts), y_(dim), y_prev_(dim), y_new_(dim), tmp_(dim), k1_(dim),
      k2_(dim), k3_(dim), k4_(dim), k5_(dim), k6_(dim), k7_(dim) {}

void Dopri5::reset(double t, std::span<const double> y) {
  t_ = t;
  std::copy(y.begin(), y.end(), y_.begin());
  rhs_(t_, y_, k1_);
  fresh_ = true;
  err_prev_ = 1e-4;
}

double Dopri5::initial_step(double t_stop) const {
  // Hairer & Wanner's starting step heuristic
  const double dir = t_stop >= t_ ? 1.0 : -1.0;
  if (opts_.initial_step > 0) return dir * opts_.initial_step;
  double d0 = 0, d1n = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double sk = opts_.atol + opts_.rtol * std::abs(y_[i]);
    d0 += (y_[i] / sk) * (y_[i] / sk);
    d1n += (k1_[i] / sk) * (k1_[i] / sk);
  }
  d0 = std::sqrt(d0 / static_cast<double>(std::max<std::size_t>(n_, 1)));
  d1n = std::sqrt(d1n / static_cast<double>(std::max<std::size_t>(n_, 1)));
  double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
  h0 = std::min(h0, std::abs(t_stop - t_));
  if (h0 <= 0) return dir * 1e-6;
  std::vector<double> y1(n_), f1(n_);
  for (std::size_t i = 0; i < n_; ++i) y1[i] = y_[i] + dir * h0 * k1_[i];
  rhs_(t_ + dir * h0, y1, f1);
  double d2 = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double sk = opts_.atol + opts_.rtol * std::abs(y_[i]);
    d2 += ((f1[i] - k1_[i]) / sk) * ((f1[i] - k1_[i]) / sk);
  }
  d2 = std::sqrt(d2 / static_cast<double>(std::max<std::size_t>(n_, 1))) / h0;
  const double dm = std::max(d1n, d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  double h = std::min(100 * h0, h1);
  if (opts_.max_step > 0) h = std::min(h, opts_.max_step);
  return dir * h;
}

bool Dopri5::try_step(double h) {
  const double t = t_;
  const auto& y = y_;
  for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * a21 * k1_[i];
  rhs_(t + c2 * h, tmp_, k2_);
  for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
  rhs_(t + c3 * h, tmp_, k3_);
  for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
  rhs_(t + c4 * h, tmp_, k4_);
  for (std::size_t i = 0; i < n_; ++i)
    tmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
  rhs_(t + c5 * h, tmp_, k5_);
  for (std::size_t i = 0; i < n_; ++i)
    tmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
  rhs_(t + h, tmp_, k6_);
  for (std::size_t i = 0; i < n_; ++i)
    y_new_[i] = y[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
  rhs_(t + h, y_new_, k7_);

  double err = 0.0;
  bool finite = true;
  for (std::size_t i = 0; i < n_; ++i) {
    const double e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
    const double sk = opts_.atol + opts_.rtol * std::max(std::abs(y[i]), std::abs(y_new_[i]));
    err += (e / sk) * (e / sk);
    if (!std::isfinite(y_new_[i])) finite = false;
  }
  err = n_ ? std::sqrt(err / static_cast<double>(n_)) : 0.0;
  if (!finite) err = std::numeric_limits<double>::infinity();

  if (err <= 1.0) {
    // PI step-size control
    double fac = std::pow(std::max(err, 1e-10), -0.7 / 5.0) * std::pow(err_prev_, 0.4 / 5.0);
    fac = std::clamp(0.9 * fac, 0.2, 10.0);
    err_prev_ = std::max(err, 1e-4);
    h_ = h * fac;
    return true;
  }
  double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
  h_ = h * fac;
  return false;
}

void Dopri5::commit(double h, DenseOutput* dense) {
  if (dense) {
    if (dense->n_steps() == 0 && dense->front().empty()) dense->start(t_, y_);
    dense->push_step(t_, h, y_, y_new_, k1_, k3_, k4_, k5_, k6_, k7_);
  }
  last_dense_ = DenseOutput(n_);
  last_dense_.start(t_, y_);
  last_dense_.push_step(t_, h, y_, y_new_, k1_, k3_, k4_, k5_, k6_, k7_);
  t_prev_ = t_;
  y_prev_ = y_;
  t_ = t_ + h;
  std::swap(y_, y_new_);
  std::swap(k1_, k7_);
  fresh_ = false;
  ++n_accepted_;
}

void Dopri5::step(double t_stop, DenseOutput* dense) {
  const double dir = t_stop >= t_ ? 1.0 : -1.0;
  if (h_ == 0.0 || fresh_) {
    if (h_ == 0.0) h_ = initial_step(t_stop);
    fresh_ = false;
  }
  while (true) {
    double h = dir * std::abs(h_);
    if (opts_.max_step > 0) h = dir * std::min(std::abs(h), opts_.max_step);
    const double remaining = t_stop - t_;
    bool last = false;
    if (std::abs(h) >= std::abs(remaining) * (1.0 - 1e-12) || std::abs(remaining - h) < 1e-12 * std::abs(h)) {
      h = remaining;
      last = true;
    }
    const double min_h = opts_.min_step * std::max(1.0, std::abs(t_));
    if (std::abs(h) < min_h && !last) throw StepSizeUnderflow(t_, h);
    const double h_keep = h_;
    if (try_step(h)) {
      commit(h, dense);
      if (last) {
        t_ = t_stop;  // exact landing
        // keep the prior proposal when the last step was truncated
        if (std::abs(h) < std::abs(h_keep)) h_ = h_keep;
      }
      return;
    }
    if (std::abs(h_) < min_h) throw StepSizeUnderflow(t_, h_);
  }
}

void Dopri5::advance_to(double t_stop, DenseOutput* dense) {
  std::size_t guard = 0;
  while (t_ != t_stop) {
    step(t_stop, dense);
    if (++guard > opts_.max_steps) throw NumericError("ODE step budget exhausted");
  }
}

std::vector<double> interior_stops(double t0, double t1, std::span<const double> points) {
  const double dir = t1 > t0 ? 1.0 : -1.0;
  std::vector<double> stops;
  for (double s : points)
    if ((s - t0) * dir > 1e-13 * std::max(1.0, std::abs(t0)) && (t1 - s) * dir > 1e-13 * std::max(1.0, std::abs(t1)))
      stops.push_back(s);
  std::sort(stops.begin(), stops.end());
  if (dir < 0) std::reverse(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  return stops;
}

DenseOutput integrate_segments(const OdeRhs& rhs, double t0, std::span<const double> y0, double t1,
                               const OdeOptions& opts, std::span<const double> restarts,
                               const std::function<void(double, double)>& on_segment) {
  DenseOutput dense(y0.size());
  dense.start(t0, y0);
  if (t1 == t0) return dense;
  std::vector<double> stops = interior_stops(t0, t1, restarts);
  stops.push_back(t1);

  Dopri5 solver(rhs, y0.size(), opts);
  double from = t0;
  double h_carry = 0.0;
  std::vector<double> y(y0.begin(), y0.end());
  for (double s : stops) {
    if (on_segment) on_segment(from, s);
    solver.reset(from, y);
    if (h_carry != 0.0) solver.set_proposed_step(h_carry);
    solver.advance_to(s, &dense);
    h_carry = solver.proposed_step();
    y.assign(solver.y().begin(), solver.y().end());
    from = s;
  }
  return dense;
}

DenseOutput integrate(const OdeRhs& rhs, double t0, std::span<const double> y0, double t1, const OdeOptions& opts,
                      std::span<const double> restarts) {
  return integrate_segments(rhs, t0, y0, t1, opts, restarts, {});
}

}  // namespace fluidmc
