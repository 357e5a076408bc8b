#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "fluidmc/fluid.hpp"
#include "fluidmc/generator.hpp"
#include "fluidmc/model.hpp"

namespace fluidmc {

/// Generator of k independent tagged agents in the mean-field limit.
///
/// Each agent moves over `local_states` (a class of the population model, or
/// all states) with rates q_ij(x(t)) = sum_tau m_{tau,i->j} f^i_tau(x(t)) read
/// from the fluid trajectory. For k > 1 a state is a tuple of local indices
/// and only one coordinate changes per jump.
class AgentGenerator final : public Generator {
 public:
  AgentGenerator(const PopulationModel& model, std::shared_ptr<const FluidTrajectory> trajectory,
                 std::vector<int> local_states, int k = 1);

  std::size_t size() const override { return size_; }
  void eval(double t, Matrix& q) const override;
  std::vector<double> breakpoints() const override { return trajectory_->event_times(); }
  double t_min() const override { return 0.0; }
  double t_max() const override { return trajectory_->t_max(); }
  const std::vector<std::string>& state_names() const override { return names_; }

  /// Single-agent generator (n_local x n_local) at t.
  void eval_local(double t, Matrix& q) const;
  Eigen::SparseMatrix<double> eval_sparse(double t) const;

  int k() const { return k_; }
  std::size_t n_local() const { return local_.size(); }
  /// Model state index of each local state.
  const std::vector<int>& local_states() const { return local_; }
  /// Local coordinates of a tuple state.
  std::vector<int> decode(std::size_t s) const;
  std::size_t encode(const std::vector<int>& local) const;
  const FluidTrajectory& trajectory() const { return *trajectory_; }

 private:
  struct Entry {
    int from, to;  // local indices
    double multiplicity;
    SingleAgentRate rate;
  };
  std::shared_ptr<const FluidTrajectory> trajectory_;
  std::vector<double> params_;
  std::vector<int> local_;
  int k_;
  std::size_t size_;
  std::vector<Entry> entries_;
  std::vector<std::string> names_;
};

/// Tracked class of a model state: the states one agent starting there can visit.
std::vector<int> tracked_states(const PopulationModel& model, int start_state);

}  // namespace fluidmc
