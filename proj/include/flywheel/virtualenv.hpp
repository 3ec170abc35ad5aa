#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flywheel/env_types.hpp"
#include "flywheel/trajectory.hpp"

namespace flywheel::virtualenv {

// Transition table of one simulated application. Implementations are
// stateless; all state lives in EnvState.
class EnvironmentModel {
 public:
  virtual ~EnvironmentModel() = default;
  virtual std::string kind() const = 0;
  virtual DeviceFamily default_device() const = 0;
  virtual EnvState initial_state(const ScenarioSpec& scenario) const = 0;
  // Mutates `state` and returns nullopt, or returns why the action is illegal
  // and leaves `state` untouched. Called after the toast is cleared.
  virtual std::optional<std::string> apply(EnvState& state, const Action& action) const = 0;
  virtual std::vector<CheckpointPredicate> builtin_predicates() const = 0;
};

struct StepResult {
  EnvState state;
  Observation observation;
  PredicateEvals predicate_evals;
  std::optional<std::string> error;  // IllegalAction diagnostic; state unchanged
  bool illegal() const { return error.has_value(); }
};

// An environment model plus the checkpoint predicates registered on it.
class VirtualEnv {
 public:
  VirtualEnv(std::shared_ptr<const EnvironmentModel> model, std::vector<CheckpointPredicate> predicates);

  std::string kind() const { return model_->kind(); }
  const EnvironmentModel& model() const { return *model_; }

  std::pair<EnvState, Observation> reset(const ScenarioSpec& scenario) const;
  StepResult step(const EnvState& state, const Action& action) const;
  PredicateEvals evaluate(const EnvState& state) const;

  // Replaces any predicate with the same id.
  void register_predicate(CheckpointPredicate predicate);
  const std::vector<CheckpointPredicate>& predicates() const { return predicates_; }
  std::set<std::string> checkpoint_ids() const;

 private:
  std::shared_ptr<const EnvironmentModel> model_;
  std::vector<CheckpointPredicate> predicates_;
};

class EnvironmentRegistry {
 public:
  void add(std::shared_ptr<const EnvironmentModel> model);
  // Environment with the model's built-in predicates. Throws kUnknownEnvironment.
  VirtualEnv create(const std::string& kind) const;
  std::vector<std::string> kinds() const;

 private:
  std::map<std::string, std::shared_ptr<const EnvironmentModel>> models_;
};

// doc-editor, list-browser and form-flow.
const EnvironmentRegistry& default_registry();

std::pair<EnvState, Observation> reset(const std::string& env_kind, const ScenarioSpec& scenario,
                                       const EnvironmentRegistry& registry = default_registry());

// Reads the optional `predicates` array of a DAG document.
std::vector<CheckpointPredicate> parse_predicates(const std::string& dag_document);
std::vector<CheckpointPredicate> load_predicates(const std::string& dag_file);

// ---- scripted (RPA) policies -------------------------------------------------

struct ScriptRule {
  std::vector<Clause> guard;  // empty guard always fires
  Action action;
  bool once = true;  // retired after firing
};

// First live rule whose guard holds fires.
struct ScriptedPolicy {
  std::vector<ScriptRule> rules;
  static ScriptedPolicy sequence(const std::vector<Action>& actions);
};

// Steps record (o_t, a_t, predicate evals of the next state). Stops at
// terminate, when no rule fires, or at max_steps.
trajectory::Trajectory rollout_scripted(const VirtualEnv& env, const ScenarioSpec& scenario,
                                        const ScriptedPolicy& policy,
                                        const std::vector<CheckpointPredicate>& predicates,
                                        std::size_t max_steps, const taskgraph::ComposedTask& task);

// ---- instruction decomposition -----------------------------------------------

class Decomposer {
 public:
  virtual ~Decomposer() = default;
  // Actions that carry out `instruction` starting from `state`. Throws
  // kUndecomposableInstruction.
  virtual std::vector<Action> decompose(const std::string& instruction, const VirtualEnv& env,
                                        const EnvState& state, std::size_t max_steps) const = 0;
};

// Verb pattern table. Clauses joined by the composer's connectives are
// decomposed in order; each clause is planned against the state left by the
// previous one, so only still-missing work is emitted.
class RuleBasedDecomposer final : public Decomposer {
 public:
  explicit RuleBasedDecomposer(std::vector<std::string> connectives = {", then "});
  std::vector<Action> decompose(const std::string& instruction, const VirtualEnv& env,
                                const EnvState& state, std::size_t max_steps) const override;

  // Same, for one clause with no connective splitting.
  std::vector<Action> decompose_clause(const std::string& clause, const VirtualEnv& env,
                                       const EnvState& state, std::size_t max_steps) const;

  const std::vector<std::string>& connectives() const { return connectives_; }

 private:
  std::vector<std::string> connectives_;
};

std::vector<std::string> split_clauses(const std::string& instruction,
                                       const std::vector<std::string>& connectives);

std::vector<Action> decompose_instruction(const std::string& instruction, const VirtualEnv& env,
                                          const EnvState& state, const Decomposer& decomposer,
                                          std::size_t max_steps = 64);

}  // namespace flywheel::virtualenv
