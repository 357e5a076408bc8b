#include "fluidmc/transient.hpp"

#include <algorithm>
#include <cmath>

#include "fluidmc/error.hpp"

namespace fluidmc {

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

TransientSolution::TransientSolution(DenseOutput dense, std::size_t rows, std::size_t cols, double t0, double t1,
                                     bool backward)
    : dense_(std::move(dense)), rows_(rows), cols_(cols), t0_(t0), t1_(t1), backward_(backward) {}

Matrix TransientSolution::raw(double t) const {
  std::vector<double> y(rows_ * cols_);
  dense_.eval(std::clamp(t, std::min(t0_, t1_), std::max(t0_, t1_)), y);
  return ConstRowMap(y.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
}

Matrix TransientSolution::at(double t) const { return raw(t).cwiseMax(0.0).cwiseMin(1.0); }

namespace {

OdeOptions ode_options(const TransientOptions& o) {
  OdeOptions ode;
  ode.rtol = o.rtol;
  ode.atol = o.atol;
  return ode;
}

TransientSolution solve_forward(const Generator& q, const Matrix& init, double t0, double t1,
                                const TransientOptions& opts) {
  if (t1 < t0) throw std::invalid_argument("forward solve needs t1 >= t0");
  q.require_domain(t0, t1);
  const auto rows = init.rows(), n = init.cols();
  Matrix qt;
  OdeRhs rhs = [&, rows, n](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, qt);
    ConstRowMap p(y.data(), rows, n);
    RowMap d(dy.data(), rows, n);
    d.noalias() = p * qt;
  };
  std::vector<double> y0(static_cast<std::size_t>(rows * n));
  RowMap(y0.data(), rows, n) = init;
  const auto stops = q.breakpoints_in(t0, t1);
  auto dense = integrate(rhs, t0, y0, t1, ode_options(opts), stops);
  return {std::move(dense), static_cast<std::size_t>(rows), static_cast<std::size_t>(n), t0, t1, false};
}

}  // namespace

TransientSolution forward(const Generator& q, double t0, double t1, const TransientOptions& opts) {
  const auto n = static_cast<Eigen::Index>(q.size());
  return solve_forward(q, Matrix::Identity(n, n), t0, t1, opts);
}

TransientSolution forward_distribution(const Generator& q, const Vector& p0, double t0, double t1,
                                       const TransientOptions& opts) {
  return solve_forward(q, p0.transpose(), t0, t1, opts);
}

TransientSolution backward(const Generator& q, double t0, double t1, const TransientOptions& opts) {
  if (t1 < t0) throw std::invalid_argument("backward solve needs t1 >= t0");
  q.require_domain(t0, t1);
  const auto n = static_cast<Eigen::Index>(q.size());
  Matrix qt;
  OdeRhs rhs = [&, n](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, qt);
    ConstRowMap p(y.data(), n, n);
    RowMap d(dy.data(), n, n);
    d.noalias() = -qt * p;
  };
  std::vector<double> y0(static_cast<std::size_t>(n * n));
  RowMap(y0.data(), n, n).setIdentity();
  const auto stops = q.breakpoints_in(t0, t1);
  auto dense = integrate(rhs, t1, y0, t0, ode_options(opts), stops);
  return {std::move(dense), static_cast<std::size_t>(n), static_cast<std::size_t>(n), t0, t1, true};
}

std::size_t poisson_terms(double lambda, double tail) {
  // accumulate until the remaining mass drops below the bound
  double w = std::exp(-lambda);
  double acc = w;
  std::size_t k = 0;
  while (1.0 - acc > tail && k < 100000) {
    ++k;
    w *= lambda / static_cast<double>(k);
    acc += w;
  }
  return k + 1;
}

Matrix uniformization(const Matrix& q, double t, double tail) {
  const auto n = q.rows();
  if (t == 0.0 || n == 0) return Matrix::Identity(n, n);
  if (t < 0.0) throw std::invalid_argument("uniformization needs t >= 0");
  const double rate = (-q.diagonal()).maxCoeff();
  if (rate <= 0.0) return Matrix::Identity(n, n);
  const double unif = rate * 1.02;
  const Matrix P = Matrix::Identity(n, n) + q / unif;

  // split so that each Poisson parameter is at most 50
  const double lambda_total = unif * t;
  const int parts = std::max(1, static_cast<int>(std::ceil(lambda_total / 50.0)));
  const double lambda = lambda_total / parts;
  const double piece_tail = tail / parts;

  const std::size_t terms = poisson_terms(lambda, piece_tail);
  Matrix term = Matrix::Identity(n, n);
  double w = std::exp(-lambda);
  Matrix piece = w * term;
  for (std::size_t k = 1; k < terms; ++k) {
    term = term * P;
    w *= lambda / static_cast<double>(k);
    piece += w * term;
  }
  Matrix out = piece;
  for (int p = 1; p < parts; ++p) out = out * piece;
  return out;
}

}  // namespace fluidmc
