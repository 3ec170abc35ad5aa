#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "flywheel/random.hpp"
#include "flywheel/taskgraph.hpp"
#include "flywheel/trajectory.hpp"
#include "flywheel/virtualenv.hpp"

namespace flywheel::agentloop {

using trajectory::Step;
using trajectory::Trajectory;
using virtualenv::Action;
using virtualenv::EnvState;
using virtualenv::PredicateEvals;
using virtualenv::VirtualEnv;

enum class SubgoalStatus { kPending, kActive, kDone };
std::string_view to_string(SubgoalStatus s);

struct Subgoal {
  std::string text;
  std::optional<std::string> checkpoint;  // predicate id that certifies completion
  SubgoalStatus status = SubgoalStatus::kPending;
  bool operator==(const Subgoal&) const = default;
};

enum class Judgment { kSuccess, kFailure };
std::string_view to_string(Judgment j);

struct Feedback {
  Judgment judgment = Judgment::kSuccess;
  std::string diagnostic;  // nonempty on FAILURE
  bool operator==(const Feedback&) const = default;
};

// Last N full turns plus the ordered conclusions of every earlier turn.
struct ContextWindow {
  std::size_t window_size = 0;
  std::vector<Step> recent;
  std::string summary;  // non-empty conclusions joined by '\n'
  std::size_t summarized_turns = 0;
};

// Throws kInvalidArgument when window_size == 0.
ContextWindow build_context(std::span<const Step> history, std::size_t window_size);

// X_t plus the bookkeeping the reference manager needs.
struct SystemState {
  std::string instruction;
  EnvState env_state;
  std::vector<Subgoal> subgoals;
  std::optional<Feedback> feedback;  // F_{t-1}
  std::vector<std::string> notes;
  std::optional<std::string> knowledge;  // K_RAG, passed through untouched
  std::size_t t = 0;                     // completed turns
  std::size_t consecutive_failures = 0;  // on the active subgoal
  bool aborted = false;

  const Subgoal* active() const;
  bool all_done() const;
};

// ---- roles -------------------------------------------------------------------

struct ManagerDecision {
  std::vector<Subgoal> subgoals;
  bool abort = false;
};

class Manager {
 public:
  virtual ~Manager() = default;
  // f_M. Throws kUnplannableInstruction.
  virtual std::vector<std::string> plan(const std::string& instruction,
                                        const std::optional<std::string>& knowledge) const = 0;
  // u_M. `feedback` is empty for the initial activation.
  virtual ManagerDecision update(const std::vector<Subgoal>& subgoals, const std::optional<Feedback>& feedback,
                                 const PredicateEvals& evals_after, std::size_t consecutive_failures) const = 0;
};

struct WorkerInput {
  const std::string& instruction;
  const EnvState& env_state;
  const std::vector<Subgoal>& subgoals;
  const std::optional<Feedback>& feedback;
  const std::vector<std::string>& notes;
  const ContextWindow& context;
  const VirtualEnv& env;
};

struct WorkerOutput {
  Action action;
  std::string thought;
  std::string conclusion;
};

class Worker {
 public:
  virtual ~Worker() = default;
  virtual WorkerOutput act(const WorkerInput& input, Rng& rng) const = 0;
};

struct Transition {
  const EnvState& before;
  const Action& action;
  const EnvState& after;
  const std::optional<std::string>& error;
  const PredicateEvals& evals_before;
  const PredicateEvals& evals_after;
  const Subgoal* active;
};

class Reflector {
 public:
  virtual ~Reflector() = default;
  virtual Feedback reflect(const Transition& transition) const = 0;
};

class Notetaker {
 public:
  virtual ~Notetaker() = default;
  // u_C on a SUCCESS step; the loop keeps N_t unchanged otherwise.
  virtual std::vector<std::string> update(const std::vector<std::string>& notes, const EnvState& after) const = 0;
};

// Splits on the composer's connectives. Marks the active subgoal done once its
// checkpoint holds after a step, then skips following subgoals whose
// checkpoints already hold. Aborts after more than `failure_budget`
// consecutive failures on one subgoal.
class ReferenceManager final : public Manager {
 public:
  explicit ReferenceManager(std::vector<std::string> connectives = {", then "},
                            std::optional<std::size_t> failure_budget = std::nullopt);
  std::vector<std::string> plan(const std::string& instruction,
                                const std::optional<std::string>& knowledge) const override;
  ManagerDecision update(const std::vector<Subgoal>& subgoals, const std::optional<Feedback>& feedback,
                         const PredicateEvals& evals_after, std::size_t consecutive_failures) const override;

 private:
  std::vector<std::string> connectives_;
  std::optional<std::size_t> failure_budget_;
};

// Emits the first action the rule table plans for the active subgoal from
// the current state; presses Wait when nothing is planned. Ignores notes.
class ScriptedWorker final : public Worker {
 public:
  explicit ScriptedWorker(std::size_t plan_budget = 64);
  WorkerOutput act(const WorkerInput& input, Rng& rng) const override;

 private:
  virtualenv::RuleBasedDecomposer decomposer_;
  std::size_t plan_budget_;
};

// SUCCESS iff the action was legal and either the active checkpoint flipped
// 0 -> 1 or the environment state changed.
class CheckpointReflector final : public Reflector {
 public:
  Feedback reflect(const Transition& transition) const override;
};

// Appends "id: content" for visible elements (and "toast: text") whose note is
// not yet recorded and matches `pattern`.
class PatternNotetaker final : public Notetaker {
 public:
  explicit PatternNotetaker(const std::string& pattern = ".+");
  std::vector<std::string> update(const std::vector<std::string>& notes, const EnvState& after) const override;

 private:
  std::regex pattern_;
};

using SafetyCheck = std::function<bool(const Action&)>;  // true = banned

struct RoleBundle {
  std::shared_ptr<const Manager> manager;
  std::shared_ptr<const Worker> worker;
  std::shared_ptr<const Reflector> reflector;
  std::shared_ptr<const Notetaker> notetaker;
  SafetyCheck banned;  // no safety stop when empty
};

RoleBundle reference_roles(const std::vector<std::string>& connectives = {", then "},
                           const std::string& note_pattern = ".+");

// ---- loop ----------------------------------------------------------------------

// Throws kUnplannableInstruction for an empty instruction or an empty plan.
std::vector<Subgoal> plan_initial(const Manager& manager, const std::string& instruction,
                                  const std::optional<std::string>& knowledge);

struct LoopStepResult {
  SystemState next;
  Step step;
  bool safety_stop = false;  // action was banned and not executed
};

// One turn: worker, environment, reflector, gated notetaker, manager. `env`
// must carry the task's instantiated predicates.
LoopStepResult loop_step(const SystemState& state, const RoleBundle& roles, const VirtualEnv& env, Rng& rng,
                         const ContextWindow& context);

enum class Termination { kAllDone, kTimeout, kSafetyStop, kAborted };
std::string_view to_string(Termination t);

struct EpisodeLimits {
  std::size_t max_steps = 32;
  std::chrono::milliseconds timeout{60000};
  std::size_t window = 2;
};

struct EpisodeResult {
  Trajectory trajectory;
  Termination termination = Termination::kTimeout;
  SystemState final_state;
};

// Copy of `env` whose predicates for the task's checkpoints are instantiated
// with the task's entity bindings.
VirtualEnv bind_task(const VirtualEnv& env, const taskgraph::ComposedTask& task);

EpisodeResult run_episode(const taskgraph::ComposedTask& task, const RoleBundle& roles, const VirtualEnv& env,
                          const virtualenv::ScenarioSpec& scenario, const EpisodeLimits& limits,
                          const std::optional<std::string>& knowledge = std::nullopt);

}  // namespace flywheel::agentloop
