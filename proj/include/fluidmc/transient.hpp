#pragma once

#include "fluidmc/generator.hpp"
#include "fluidmc/ode.hpp"

namespace fluidmc {

struct TransientOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
};

/// Dense transition-matrix function. For a forward solve this is t |-> Pi(t0, t)
/// on [t0, t1]; for a backward solve it is t |-> Pi(t, t1).
class TransientSolution {
 public:
  TransientSolution() = default;
  TransientSolution(DenseOutput dense, std::size_t rows, std::size_t cols, double t0, double t1, bool backward);

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  bool backward() const { return backward_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  /// Entries clamped to [0, 1].
  Matrix at(double t) const;
  /// Unclamped integrator state (for diagnostics).
  Matrix raw(double t) const;
  std::size_t steps() const { return dense_.n_steps(); }

 private:
  DenseOutput dense_;
  std::size_t rows_ = 0, cols_ = 0;
  double t0_ = 0, t1_ = 0;
  bool backward_ = false;
};

/// dPi/dt = Pi Q(t), Pi(t0, t0) = I, restarting at Q's breakpoints.
TransientSolution forward(const Generator& q, double t0, double t1, const TransientOptions& opts = {});

/// Same equation for a row vector p(t) = p0 Pi(t0, t).
TransientSolution forward_distribution(const Generator& q, const Vector& p0, double t0, double t1,
                                       const TransientOptions& opts = {});

/// dPi(t, t1)/dt = -Q(t) Pi(t, t1), integrated from t1 down to t0.
TransientSolution backward(const Generator& q, double t0, double t1, const TransientOptions& opts = {});

/// exp(Q t) by uniformisation, truncating the Poisson series once the
/// remaining tail mass is below `tail`. Long horizons are split so that the
/// Poisson parameter of each piece stays moderate.
Matrix uniformization(const Matrix& q, double t, double tail = 1e-12);

/// Number of Poisson terms used for parameter `lambda` and tail bound `tail`.
std::size_t poisson_terms(double lambda, double tail);

}  // namespace fluidmc
