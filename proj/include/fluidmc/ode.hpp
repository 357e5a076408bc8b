#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace fluidmc {

/// dy/dt = f(t, y)
using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double initial_step = 0.0;  ///< 0 selects automatically
  double max_step = 0.0;      ///< 0 means unbounded
  double min_step = 1e-14;    ///< relative to max(1, |t|)
  std::size_t max_steps = 10'000'000;
};

/// Continuous extension of an integration run (Dormand-Prince 5(4) with its
/// quartic interpolant). Steps may run forward or backward in time; they are
/// stored in integration order and looked up by binary search.
class DenseOutput {
 public:
  DenseOutput() = default;
  explicit DenseOutput(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  double t_lo() const { return std::min(t_begin_, t_end_); }
  double t_hi() const { return std::max(t_begin_, t_end_); }
  std::size_t n_steps() const { return h_.size(); }
  std::span<const double> step_starts() const { return t_; }

  /// Evaluates at t; values slightly outside the covered range extrapolate
  /// from the nearest step.
  void eval(double t, std::span<double> out) const;
  double eval(double t, std::size_t component) const;
  std::vector<double> eval(double t) const;
  /// Final state of the run.
  std::span<const double> back() const { return last_; }
  std::span<const double> front() const { return first_; }

  // building interface used by the integrators
  void start(double t0, std::span<const double> y0);
  void push_step(double t, double h, std::span<const double> y0, std::span<const double> y1,
                 std::span<const double> k1, std::span<const double> k3, std::span<const double> k4,
                 std::span<const double> k5, std::span<const double> k6, std::span<const double> k7);
  /// Appends the steps of `other`, which must start where this run ends.
  void append(const DenseOutput& other);

 private:
  std::size_t locate(double t) const;
  std::size_t dim_ = 0;
  double t_begin_ = 0.0;
  double t_end_ = 0.0;
  std::vector<double> t_;
  std::vector<double> h_;
  std::vector<double> coef_;  // 5 * dim per step
  std::vector<double> first_;
  std::vector<double> last_;
};

/// One Dormand-Prince 5(4) stepper with FSAL and step-size control.
class Dopri5 {
 public:
  Dopri5(OdeRhs rhs, std::size_t dim, OdeOptions opts);

  void reset(double t, std::span<const double> y);
  /// Attempts to advance by at most `h_limit` (signed). Returns false if the
  /// step was rejected; the proposed step size is updated either way.
  bool try_step(double h);
  /// Advances one accepted step, not beyond `t_stop`; records it in `dense`.
  void step(double t_stop, DenseOutput* dense);
  /// Integrates until exactly t_stop.
  void advance_to(double t_stop, DenseOutput* dense);

  double t() const { return t_; }
  std::span<const double> y() const { return y_; }
  std::span<double> y_mut() { return y_; }
  double proposed_step() const { return h_; }
  double last_t() const { return t_prev_; }
  std::span<const double> last_y() const { return y_prev_; }
  std::size_t steps_taken() const { return n_accepted_; }
  /// Dense output of the last accepted step only.
  const DenseOutput& last_step_dense() const { return last_dense_; }
  void set_proposed_step(double h) { h_ = h; }

 private:
  double initial_step(double t_stop) const;
  void commit(double h, DenseOutput* dense);

  OdeRhs rhs_;
  std::size_t n_;
  OdeOptions opts_;
  double t_ = 0.0;
  double h_ = 0.0;
  double t_prev_ = 0.0;
  std::vector<double> y_, y_prev_, y_new_, tmp_;
  std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_;
  bool fresh_ = true;
  std::size_t n_accepted_ = 0;
  double err_prev_ = 1e-4;
  DenseOutput last_dense_;
};

/// Integrates from t0 to t1 (either direction), restarting the stepper at
/// each interior time in `restarts` (solutions stay continuous there but the
/// right-hand side may not be smooth across them).
DenseOutput integrate(const OdeRhs& rhs, double t0, std::span<const double> y0, double t1, const OdeOptions& opts,
                      std::span<const double> restarts = {});

/// As integrate(), calling `on_segment(a, b)` before each piece between
/// consecutive restart times so that piecewise-constant inputs of the
/// right-hand side can be frozen for that piece.
DenseOutput integrate_segments(const OdeRhs& rhs, double t0, std::span<const double> y0, double t1,
                               const OdeOptions& opts, std::span<const double> restarts,
                               const std::function<void(double a, double b)>& on_segment);

/// Sorted interior stop points of (t0, t1) in integration order.
std::vector<double> interior_stops(double t0, double t1, std::span<const double> points);

}  // namespace fluidmc
