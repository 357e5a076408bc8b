#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fluidmc/model.hpp"

namespace fluidmc {

/// Settings of the exact N-agent simulation.
///
/// Replica r draws from its own std::mt19937_64 stream seeded with
/// std::seed_seq{seed (low, high 32 bits), r (low, high 32 bits)}, so results
/// do not depend on the number of worker threads.
struct SimConfig {
  int N = 0;
  /// Agents per model state; when empty they are derived from the model's
  /// initial occupancy by largest-remainder rounding of N * x0.
  std::vector<int> counts;
  double horizon = 0.0;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  /// Initial model state of each tracked agent.
  std::vector<int> tracked;
  /// Worker threads; 0 means hardware concurrency capped by FLUIDMC_THREADS.
  unsigned threads = 0;
};

/// Integer agent counts for N agents following the model's initial occupancy.
std::vector<int> initial_counts(const PopulationModel& model, int N);

/// One simulated path. Entry k holds the state on [times[k], times[k+1]).
struct SimPath {
  std::vector<double> times;
  std::vector<std::vector<int>> counts;
  std::vector<std::vector<int>> tracked;
  std::vector<int> fired;  ///< transition index of the jump at times[k] (-1 for the start)
  bool absorbed = false;   ///< no transition was enabled before the horizon
};

/// Gillespie direct method for one replica.
SimPath simulate(const PopulationModel& model, const SimConfig& config, std::size_t replica = 0);

/// Estimated probability on a grid with 95% confidence bounds.
struct EstimateSeries {
  std::string label;
  std::vector<double> grid;
  std::vector<double> p;
  std::vector<double> lo, hi;
  std::vector<double> half_width;
  /// Replicas behind each estimate.
  std::vector<std::size_t> replicas;
  /// Replicas simulated in total, including those discarded by conditioning.
  std::size_t attempted = 0;
};

/// Normal-approximation interval, or Wilson when p(1 - p) R < 10.
void confidence_interval(std::size_t hits, std::size_t n, double& p, double& lo, double& hi);

/// Distribution of the first tracked agent over model states on the grid,
/// one series per model state.
std::vector<EstimateSeries> estimate_transient(const PopulationModel& model, const SimConfig& config,
                                              const std::vector<double>& grid);

/// Probability that the first tracked agent, found in `start_state` at t0,
/// enters `goal` before `unsafe` within T. Replicas where the agent is
/// elsewhere at t0 are discarded and replaced, up to 100 R attempts.
EstimateSeries estimate_reach(const PopulationModel& model, const SimConfig& config, const std::vector<bool>& goal,
                              const std::vector<bool>& unsafe, int start_state, const std::vector<double>& t0_grid,
                              double T);

/// Same probability at one t0 as a function of the horizon.
EstimateSeries estimate_reach_horizon(const PopulationModel& model, const SimConfig& config,
                                      const std::vector<bool>& goal, const std::vector<bool>& unsafe, int start_state,
                                      double t0, const std::vector<double>& horizons);

/// Worker count honouring FLUIDMC_THREADS.
unsigned worker_threads(unsigned requested = 0);

}  // namespace fluidmc
