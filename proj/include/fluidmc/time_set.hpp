#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fluidmc {

/// Per-state boolean step function of time on [a, b]. Membership is
/// right-continuous: after a switch at time s the new value holds on [s, next).
class TimeVaryingSet {
 public:
  static constexpr std::size_t kMaxSwitches = 10'000;

  TimeVaryingSet() = default;
  TimeVaryingSet(std::size_t n, double a, double b);
  static TimeVaryingSet constant(const std::vector<bool>& members, double a, double b);
  static TimeVaryingSet constant_indices(std::size_t n, const std::vector<int>& members, double a, double b);

  std::size_t size() const { return init_.size(); }
  double t_begin() const { return a_; }
  double t_end() const { return b_; }

  /// Sets one state's step function. Switch times must be strictly increasing
  /// and lie in (a, b]; an exception is thrown otherwise or beyond the cap.
  void set(std::size_t s, bool initial, std::vector<double> switches);
  bool initial(std::size_t s) const { return init_[s]; }
  const std::vector<double>& switches(std::size_t s) const { return switches_[s]; }

  bool contains(std::size_t s, double t) const;
  std::vector<bool> at(double t) const;
  /// Sorted union of every state's switch times.
  std::vector<double> switch_times() const;
  std::size_t switch_count() const;
  bool is_constant() const { return switch_count() == 0; }

  TimeVaryingSet complement() const;
  TimeVaryingSet intersect(const TimeVaryingSet& other) const;
  TimeVaryingSet unite(const TimeVaryingSet& other) const;
  /// Same step functions restricted to [a, b] (a window inside the domain).
  TimeVaryingSet restrict(double a, double b) const;

  friend bool operator==(const TimeVaryingSet& x, const TimeVaryingSet& y);

 private:
  double a_ = 0.0, b_ = 0.0;
  std::vector<bool> init_;
  std::vector<std::vector<double>> switches_;
};

/// Piecewise-smooth vector function of time on [a, b]. Each piece owns an
/// evaluator valid on its closed interval; the function takes the value of
/// piece k on [lo_k, hi_k), so boundaries are the only possible jumps.
class TimeFunction {
 public:
  using Eval = std::function<void(double t, std::span<double> out)>;
  struct Piece {
    double lo, hi;
    Eval f;
  };
  struct Jump {
    double time;
    std::vector<double> left, right;
  };

  TimeFunction() = default;
  TimeFunction(std::size_t dim, std::vector<Piece> pieces);
  static TimeFunction constant(std::vector<double> value, double a, double b);

  std::size_t dim() const { return dim_; }
  double t_begin() const { return pieces_.front().lo; }
  double t_end() const { return pieces_.back().hi; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  /// Right-continuous value, clamped to [0, 1].
  void eval(double t, std::span<double> out) const;
  std::vector<double> eval(double t) const;
  double eval(double t, std::size_t i) const;
  /// Unclamped value.
  std::vector<double> raw(double t) const;
  /// Limit from the left (at the first point, equals the value).
  std::vector<double> left_limit(double t) const;
  /// Piece boundaries where some component changes by more than `tol`.
  std::vector<Jump> jumps(double tol = 1e-9) const;
  std::vector<double> boundaries() const;
  std::size_t piece_index(double t) const;

 private:
  std::size_t dim_ = 0;
  std::vector<Piece> pieces_;
};

}  // namespace fluidmc
