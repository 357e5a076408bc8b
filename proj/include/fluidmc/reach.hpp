#pragma once

#include <string>
#include <vector>

#include "fluidmc/generator.hpp"
#include "fluidmc/time_set.hpp"
#include "fluidmc/transient.hpp"

namespace fluidmc {

struct ReachOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Evolve Pi(t, t + T) with the two-sided equation
  /// dPi/dt = -Q(t) Pi + Pi Q(t + T) instead of composing a backward and a
  /// forward solve at an anchor. Only sensible when the chain is not stiff
  /// over the window; kept as a cross-check.
  bool two_sided = false;
  /// Receives human-readable warnings (overlapping goal/unsafe membership).
  std::vector<std::string>* warnings = nullptr;

  TransientOptions transient() const { return {rtol, atol}; }
};

/// Probability of reaching G within [t, t + T] while avoiding U, for every
/// starting state and t in [t0, t1]. States in G count as reached at once;
/// a state in both sets counts as a goal.
TimeFunction reach_const(const Generator& q, const std::vector<bool>& goal, const std::vector<bool>& unsafe, double T,
                         double t0, double t1, const ReachOptions& opts = {});

/// Time-varying version. With `terminal` given, an agent that is still safe
/// and has not reached G at time t + T collects terminal(t + T)[state]
/// instead of 0; this is how the two phases of a delayed until are chained.
TimeFunction reach_tv(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double T,
                      double t0, double t1, const ReachOptions& opts = {}, const TimeFunction* terminal = nullptr);

/// Reachability probability at fixed initial time t0 as a function of the
/// horizon T in [0, T_max].
TimeFunction reach_horizon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double t0,
                           double T_max, const ReachOptions& opts = {});

/// Mask matrix (2n x 2n) applied when membership switches at time b: safe
/// states that become goals move to their barred copy, safe states that
/// become unsafe lose their mass, barred states are untouched.
Matrix zeta_matrix(const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double b);

/// Full 2n x 2n product of doubled-chain transition matrices and masks over
/// [t, t + T]. Mass in the barred copy has reached the goal.
Matrix upsilon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double t, double T,
               const ReachOptions& opts = {});

/// Reachability probabilities at a single initial time from the explicit
/// doubled-chain product; a reference for reach_tv.
std::vector<double> reach_upsilon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe,
                                  double t, double T, const ReachOptions& opts = {});

}  // namespace fluidmc
