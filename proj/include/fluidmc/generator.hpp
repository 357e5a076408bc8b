#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fluidmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Time-dependent infinitesimal generator Q(t) of a small CTMC.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual std::size_t size() const = 0;
  /// Writes Q(t) into `q` (resized as needed).
  virtual void eval(double t, Matrix& q) const = 0;
  /// Times where Q is continuous but not smooth; solvers restart there.
  virtual std::vector<double> breakpoints() const { return {}; }
  /// Interval on which Q may be evaluated.
  virtual double t_min() const { return 0.0; }
  virtual double t_max() const;
  virtual const std::vector<std::string>& state_names() const = 0;
  virtual bool homogeneous() const { return false; }

  Matrix at(double t) const {
    Matrix q;
    eval(t, q);
    return q;
  }
  /// Throws DomainError unless [a, b] lies inside the domain.
  void require_domain(double a, double b) const;
  /// Breakpoints strictly inside (a, b), sorted.
  std::vector<double> breakpoints_in(double a, double b) const;
};

class ConstantGenerator final : public Generator {
 public:
  explicit ConstantGenerator(Matrix q, std::vector<std::string> names = {});

  std::size_t size() const override { return static_cast<std::size_t>(q_.rows()); }
  void eval(double, Matrix& q) const override { q = q_; }
  const std::vector<std::string>& state_names() const override { return names_; }
  bool homogeneous() const override { return true; }
  const Matrix& matrix() const { return q_; }

 private:
  Matrix q_;
  std::vector<std::string> names_;
};

/// Generator given by an arbitrary callable; mostly for tests and oracles.
class FunctionGenerator final : public Generator {
 public:
  using Fn = std::function<void(double, Matrix&)>;
  FunctionGenerator(std::size_t n, Fn fn, std::vector<double> breakpoints = {}, double t_min = 0.0,
                    double t_max = 1e300, std::vector<std::string> names = {});

  std::size_t size() const override { return n_; }
  void eval(double t, Matrix& q) const override;
  std::vector<double> breakpoints() const override { return breaks_; }
  double t_min() const override { return t_min_; }
  double t_max() const override { return t_max_; }
  const std::vector<std::string>& state_names() const override { return names_; }

 private:
  std::size_t n_;
  Fn fn_;
  std::vector<double> breaks_;
  double t_min_, t_max_;
  std::vector<std::string> names_;
};

std::vector<std::string> default_state_names(std::size_t n);

}  // namespace fluidmc
