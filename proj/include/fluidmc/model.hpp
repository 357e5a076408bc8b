#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fluidmc/error.hpp"
#include "fluidmc/expr.hpp"

namespace fluidmc {

struct UpdateRule {
  int source = 0;
  int target = 0;
  int multiplicity = 1;

  friend bool operator==(const UpdateRule&, const UpdateRule&) = default;
};

/// Explicitly declared per-agent rate for one source state of a transition.
struct AgentRateDecl {
  int state = 0;
  ExprPtr rate;
  ExprPtr boundary;  ///< value used when the source occupancy is zero; may be null
};

struct Transition {
  std::string name;
  std::vector<UpdateRule> rules;
  ExprPtr rate;
  std::vector<AgentRateDecl> agent_rates;
  int line = 0;

  /// Net change of every state count when the transition fires once.
  std::vector<int> update_vector(std::size_t n_states) const;
  /// Total multiplicity of rule i -> j (0 when absent).
  int multiplicity(int source, int target) const;
  /// Number of agents consumed from state i.
  int consumed(int source) const;
  const AgentRateDecl* agent_rate(int state) const;
};

struct StateClass {
  std::string name;
  std::vector<int> states;

  friend bool operator==(const StateClass&, const StateClass&) = default;
};

/// Population CTMC in normalised form: occupancy fractions over agent states.
struct PopulationModel {
  std::vector<std::string> states;
  std::vector<std::string> param_names;
  std::vector<double> param_values;
  std::vector<double> init;
  std::vector<Transition> transitions;
  std::vector<StateClass> classes;

  std::size_t n_states() const { return states.size(); }
  std::optional<int> state_index(std::string_view name) const;
  std::optional<int> param_index(std::string_view name) const;
  double rate(std::size_t transition, std::span<const double> x) const;
  /// Class containing `state`; -1 when the model has no class partition.
  int class_of(int state) const;
  /// States an individual agent starting in `state` can occupy.
  std::vector<int> agent_states(int state) const;
};

bool structurally_equal(const PopulationModel& a, const PopulationModel& b);

/// Reads a model from DSL text. Throws DiagnosticError listing every problem.
PopulationModel parse_model(std::string_view text);
PopulationModel load_model(const std::string& path);

/// Canonical DSL rendering; parse_model(print_model(m)) reproduces m.
std::string print_model(const PopulationModel& model);

/// Semantic checks; an empty result means the model is usable.
std::vector<Diagnostic> validate(const PopulationModel& model);

/// Per-agent rate f^i_tau of one rule i -> j, so that an agent in i moves to
/// j at rate multiplicity * f^i_tau(x).
struct SingleAgentRate {
  int transition = 0;
  int source = 0;
  int target = 0;
  int multiplicity = 1;
  ExprPtr rate;
  ExprPtr boundary;
  bool auto_factored = false;

  double eval(std::span<const double> x, std::span<const double> params) const;
};

/// Throws NotSingleAgentCompatible when some rule out of `state` has a rate
/// that neither factors syntactically nor has an explicit agent form.
std::vector<SingleAgentRate> single_agent_rates(const PopulationModel& model, int state);

/// Quasi-random points on the reachable occupancy region (Halton based,
/// class masses respected), including the region's vertices.
std::vector<std::vector<double>> simplex_samples(const PopulationModel& model, std::size_t count);

}  // namespace fluidmc
