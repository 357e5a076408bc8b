#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fluidmc/generator.hpp"
#include "fluidmc/reach.hpp"
#include "fluidmc/time_set.hpp"
#include "fluidmc/transient.hpp"

namespace fluidmc {

enum class Comparison { Less, LessEq, GreaterEq, Greater };

bool compare(double value, Comparison cmp, double p);
std::string to_string(Comparison cmp);

struct CslNode;
using Csl = std::shared_ptr<const CslNode>;

/// Time-bounded CSL without the steady-state operator.
struct CslNode {
  enum class Kind { True, False, Atom, Not, And, Or, Next, Until };

  Kind kind = Kind::True;
  std::string atom;
  Csl left, right;  // Not/Next use `left`; And/Or/Until use both
  Comparison cmp = Comparison::Less;
  double p = 0.0;
  double t1 = 0.0, t2 = 0.0;

  bool is_probabilistic() const { return kind == Kind::Next || kind == Kind::Until; }
};

Csl csl_true();
Csl csl_false();
Csl csl_atom(std::string name);
Csl csl_not(Csl f);
Csl csl_and(Csl a, Csl b);
Csl csl_or(Csl a, Csl b);
Csl csl_next(Comparison cmp, double p, double t1, double t2, Csl f);
Csl csl_until(Comparison cmp, double p, double t1, double t2, Csl a, Csl b);

/// Grammar (precedence ! > & > |):
///   phi  := phi '|' phi | phi '&' phi | '!' phi | '(' phi ')'
///         | 'true' | 'false' | identifier
///         | 'P' cmp number '[' path ']'
///   path := 'X' interval phi | phi 'U' interval phi
///   interval := '[' number ',' number ']'
/// Numbers may be written as fractions (1/3). Throws DiagnosticError.
Csl parse_csl(std::string_view text);
std::string to_string(const Csl& f);
bool structurally_equal(const Csl& a, const Csl& b);
/// Longest stretch of future time the truth of f at t depends on.
double time_depth(const Csl& f);

/// Atomic propositions per state. Atoms missing from every state are an
/// error at check time; state names also act as atoms of their own state.
class Labelling {
 public:
  Labelling() = default;
  explicit Labelling(std::map<std::string, std::set<std::string>> labels) : labels_(std::move(labels)) {}
  /// JSON object: state name -> array of proposition names.
  static Labelling from_json(std::string_view text);
  static Labelling load(const std::string& path);

  /// Membership vector over the given state names. Throws
  /// std::invalid_argument for an atom that labels no state.
  std::vector<bool> states_with(const std::string& atom, const std::vector<std::string>& states) const;
  const std::map<std::string, std::set<std::string>>& labels() const { return labels_; }

 private:
  std::map<std::string, std::set<std::string>> labels_;
};

struct CheckOptions {
  double zero_tol = 1e-9;     ///< time accuracy of located crossings
  double deriv_tol = 1e-6;    ///< below this slope a crossing is near-tangential
  double plateau_tol = 1e-9;  ///< |P - p| below this over a stretch is a plateau
  std::size_t initial_grid = 512;
  std::size_t max_grid = 8192;
  ReachOptions reach;
  TransientOptions transient;
};

struct Crossing {
  std::size_t state = 0;
  double time = 0.0;
  double lo = 0.0, hi = 0.0;  ///< final bisection bracket
  double residual = 0.0;      ///< |P - p| at `time`
  double derivative = 0.0;
  bool jump = false;  ///< crossing caused by a discontinuity of P
  bool tangential = false;
  bool at_t0 = false;
};

struct Plateau {
  std::size_t state = 0;
  double lo = 0.0, hi = 0.0;
};

/// Diagnostics for one threshold comparison.
struct ThresholdReport {
  std::string formula;
  std::vector<Crossing> crossings;
  std::vector<Plateau> plateaus;

  bool near_tangential() const;
  bool plateau() const { return !plateaus.empty(); }
  bool zero_at_t0() const;
};

struct RobustnessReport {
  std::vector<ThresholdReport> thresholds;
  std::vector<std::string> warnings;

  bool robust() const;
};

/// Truth set of f(t) cmp p on [a, b] for every component of f. Crossings
/// inside smooth pieces are bracketed on an adaptive grid and bisected;
/// jumps across p switch at the jump time. Throws NonRobust when P - p
/// vanishes at a (truth at the first instant is then undecided).
TimeVaryingSet threshold(const TimeFunction& f, double p, Comparison cmp, double a, double b,
                         const CheckOptions& opts = {}, ThresholdReport* report = nullptr);

struct CheckResult {
  TimeVaryingSet truth;
  /// Probability function when the formula is a probabilistic operator.
  std::optional<TimeFunction> probability;
  RobustnessReport report;

  std::vector<bool> at_t0() const { return truth.at(truth.t_begin()); }
};

/// Time-dependent truth of f for every state of q and every initial time in
/// [t0, t1]. q must be defined on [t0, t1 + time_depth(f)].
CheckResult check(const Generator& q, const Labelling& labels, const Csl& f, double t0, double t1,
                  const CheckOptions& opts = {});

/// Probability function of a probabilistic operator (its threshold ignored).
TimeFunction probability_fn(const Generator& q, const Labelling& labels, const Csl& f, double t0, double t1,
                            const CheckOptions& opts = {}, RobustnessReport* report = nullptr);

}  // namespace fluidmc
