#include "fluidmc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "fluidmc/error.hpp"

namespace fluidmc {

std::vector<int> tracked_states(const PopulationModel& model, int start_state) {
  return model.agent_states(start_state);
}

AgentGenerator::AgentGenerator(const PopulationModel& model, std::shared_ptr<const FluidTrajectory> trajectory,
                               std::vector<int> local_states, int k)
    : trajectory_(std::move(trajectory)), params_(model.param_values), local_(std::move(local_states)), k_(k) {
  if (k_ < 1) throw std::invalid_argument("number of tracked agents must be at least 1");
  if (local_.empty()) throw std::invalid_argument("tracked state space is empty");
  const std::size_t n = local_.size();
  size_ = 1;
  for (int i = 0; i < k_; ++i) {
    if (size_ > 100'000'000 / n) throw std::invalid_argument("tracked state space too large");
    size_ *= n;
  }
  if (size_ > 10'000)
    std::cerr << "warning: tracked state space has " << size_ << " states\n";

  auto local_index = [&](int s) -> int {
    auto it = std::find(local_.begin(), local_.end(), s);
    return it == local_.end() ? -1 : static_cast<int>(it - local_.begin());
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (auto& r : single_agent_rates(model, local_[a])) {
      const int b = local_index(r.target);
      if (b < 0)
        throw NotSingleAgentCompatible("transition '" + model.transitions[static_cast<std::size_t>(r.transition)].name +
                                       "' moves an agent outside the tracked states");
      entries_.push_back({static_cast<int>(a), b, static_cast<double>(r.multiplicity), std::move(r)});
    }
  }

  for (std::size_t s = 0; s < size_; ++s) {
    std::string name;
    for (int c : decode(s)) {
      if (!name.empty()) name += ',';
      name += model.states[static_cast<std::size_t>(local_[static_cast<std::size_t>(c)])];
    }
    names_.push_back(std::move(name));
  }
}

std::vector<int> AgentGenerator::decode(std::size_t s) const {
  std::vector<int> out(static_cast<std::size_t>(k_));
  const std::size_t n = local_.size();
  for (int h = k_ - 1; h >= 0; --h) {
    out[static_cast<std::size_t>(h)] = static_cast<int>(s % n);
    s /= n;
  }
  return out;
}

std::size_t AgentGenerator::encode(const std::vector<int>& local) const {
  std::size_t s = 0;
  for (int c : local) s = s * local_.size() + static_cast<std::size_t>(c);
  return s;
}

void AgentGenerator::eval_local(double t, Matrix& q) const {
  const auto n = static_cast<Eigen::Index>(local_.size());
  q.setZero(n, n);
  const std::vector<double> x = trajectory_->eval(t);
  for (const auto& e : entries_) {
    const double r = e.multiplicity * e.rate.eval(x, params_);
    if (!std::isfinite(r) || r < -1e-12) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s single-agent rate %.6g at t=%.10g", std::isfinite(r) ? "negative" : "non-finite",
                    r, t);
      throw NonFiniteValue(buf);
    }
    if (r > 0) q(e.from, e.to) += r;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum += q(i, j);
    q(i, i) = -sum;
  }
}

Eigen::SparseMatrix<double> AgentGenerator::eval_sparse(double t) const {
  Matrix ql;
  eval_local(t, ql);
  const std::size_t n = local_.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(size_ * (static_cast<std::size_t>(k_) * n + 1));
  std::size_t stride = 1;
  std::vector<std::size_t> strides(static_cast<std::size_t>(k_));
  for (int h = k_ - 1; h >= 0; --h) {
    strides[static_cast<std::size_t>(h)] = stride;
    stride *= n;
  }
  for (std::size_t s = 0; s < size_; ++s) {
    const auto c = decode(s);
    double diag = 0;
    for (int h = 0; h < k_; ++h) {
      const auto i = static_cast<Eigen::Index>(c[static_cast<std::size_t>(h)]);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
        if (j == i || ql(i, j) == 0.0) continue;
        const std::size_t target = s + (static_cast<std::size_t>(j) - static_cast<std::size_t>(i)) * strides[static_cast<std::size_t>(h)];
        trip.emplace_back(static_cast<int>(s), static_cast<int>(target), ql(i, j));
      }
      diag += ql(i, i);
    }
    trip.emplace_back(static_cast<int>(s), static_cast<int>(s), diag);
  }
  Eigen::SparseMatrix<double> q(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(size_));
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

void AgentGenerator::eval(double t, Matrix& q) const {
  if (k_ == 1) {
    eval_local(t, q);
    return;
  }
  q = Matrix(eval_sparse(t));
}

}  // namespace fluidmc
