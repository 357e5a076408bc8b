#pragma once

#include <span>
#include <string>
#include <vector>

#include "fluidmc/model.hpp"
#include "fluidmc/ode.hpp"

namespace fluidmc {

/// Limit drift F(x) = sum over transitions of v_tau * f_tau(x), together with
/// one switching function per min/max node found in the rate expressions.
class DriftField {
 public:
  explicit DriftField(const PopulationModel& model);

  std::size_t dim() const { return n_; }
  void eval(std::span<const double> x, std::span<double> F) const;
  std::vector<double> eval(std::span<const double> x) const;

  std::size_t n_switching() const { return switches_.size(); }
  /// g = lhs - rhs of the k-th min/max node.
  double switching(std::size_t k, std::span<const double> x) const;
  const std::string& switching_label(std::size_t k) const { return switches_[k].label; }

 private:
  struct Switch {
    ExprPtr lhs, rhs;
    std::string label;
  };
  std::size_t n_;
  std::vector<double> params_;
  std::vector<ExprPtr> rates_;
  std::vector<std::vector<std::pair<std::size_t, int>>> updates_;  // sparse v_tau
  std::vector<Switch> switches_;
};

DriftField build_drift(const PopulationModel& model);

struct FluidOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double event_tol = 1e-10;      ///< bisection accuracy in time
  std::size_t max_events = 10'000;
};

struct FluidEvent {
  double time = 0.0;
  std::size_t function = 0;  ///< index into the drift's switching functions
  std::string label;
};

/// Dense solution of dx/dt = F(x) on [0, T_max].
class FluidTrajectory {
 public:
  /// A trajectory that stays at x0 (useful for frozen-occupancy analyses).
  static FluidTrajectory constant(std::vector<double> x0, double t_max);

  std::size_t dim() const { return dense_.dim(); }
  double t_max() const { return t_max_; }
  /// Occupancy at t, clamped componentwise to [0, 1]. Throws DomainError
  /// outside [0, T_max].
  void eval(double t, std::span<double> out) const;
  std::vector<double> eval(double t) const;
  double eval(double t, std::size_t i) const;

  /// Switching-surface crossings, sorted by time.
  const std::vector<FluidEvent>& events() const { return events_; }
  /// Near-contacts with a switching surface that did not cross it.
  const std::vector<FluidEvent>& contacts() const { return contacts_; }
  std::vector<double> event_times() const;
  const DenseOutput& dense() const { return dense_; }
  std::size_t steps() const { return dense_.n_steps(); }

 private:
  friend FluidTrajectory integrate_fluid(const DriftField&, std::span<const double>, double, const FluidOptions&);
  DenseOutput dense_;
  double t_max_ = 0.0;
  std::vector<FluidEvent> events_;
  std::vector<FluidEvent> contacts_;
};

/// Adaptive Dormand-Prince integration with event location on every
/// switching function. Throws StepSizeUnderflow, NonFiniteValue, or
/// NumericError when the event cap is exceeded.
FluidTrajectory integrate_fluid(const DriftField& field, std::span<const double> x0, double t_max,
                                const FluidOptions& opts = {});

}  // namespace fluidmc
