#pragma once

#include <vector>

#include "fluidmc/generator.hpp"
#include "fluidmc/time_set.hpp"
#include "fluidmc/transient.hpp"

namespace fluidmc {

/// Probability, for every starting state s, that the first jump after t0
/// happens at a time t0 + tau with tau in [T1, T2] and lands in G(t0 + tau).
std::vector<double> next_at_all(const Generator& q, const TimeVaryingSet& goal, double t0, double T1, double T2,
                                const TransientOptions& opts = {});

double next_at(const Generator& q, const TimeVaryingSet& goal, std::size_t s, double t0, double T1, double T2,
               const TransientOptions& opts = {});

/// The same probabilities as functions of the initial time on [t0, t1]. The
/// result is continuous; its pieces end where t, t + T1 or t + T2 meets a
/// switch of G or a breakpoint of Q.
TimeFunction next_fn(const Generator& q, const TimeVaryingSet& goal, double T1, double T2, double t0, double t1,
                     const TransientOptions& opts = {});

}  // namespace fluidmc
