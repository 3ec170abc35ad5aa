#include "flywheel/agentloop.hpp"

#include <algorithm>

#include "flywheel/error.hpp"

namespace flywheel::agentloop {

std::string_view to_string(SubgoalStatus s) {
  switch (s) {
    case SubgoalStatus::kPending: return "pending";
    case SubgoalStatus::kActive: return "active";
    case SubgoalStatus::kDone: return "done";
  }
  return "unknown";
}

std::string_view to_string(Judgment j) { return j == Judgment::kSuccess ? "SUCCESS" : "FAILURE"; }

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kAllDone: return "all_done";
    case Termination::kTimeout: return "timeout";
    case Termination::kSafetyStop: return "safety_stop";
    case Termination::kAborted: return "aborted";
  }
  return "unknown";
}

ContextWindow build_context(std::span<const Step> history, std::size_t window_size) {
  if (window_size == 0) throw Error(ErrorCode::kInvalidArgument, "window size must be >= 1");
  ContextWindow w;
  w.window_size = window_size;
  const std::size_t keep = std::min(window_size, history.size());
  w.summarized_turns = history.size() - keep;
  for (std::size_t i = 0; i < w.summarized_turns; ++i) {
    const auto& c = history[i].conclusion;
    if (!c || c->empty()) continue;
    if (!w.summary.empty()) w.summary += '\n';
    w.summary += *c;
  }
  w.recent.assign(history.begin() + static_cast<std::ptrdiff_t>(w.summarized_turns), history.end());
  return w;
}

const Subgoal* SystemState::active() const {
  for (const auto& s : subgoals)
    if (s.status == SubgoalStatus::kActive) return &s;
  return nullptr;
}

bool SystemState::all_done() const {
  return std::all_of(subgoals.begin(), subgoals.end(),
                     [](const Subgoal& s) { return s.status == SubgoalStatus::kDone; });
}

// ---- reference roles ---------------------------------------------------------

ReferenceManager::ReferenceManager(std::vector<std::string> connectives, std::optional<std::size_t> failure_budget)
    : connectives_(std::move(connectives)), failure_budget_(failure_budget) {}

std::vector<std::string> ReferenceManager::plan(const std::string& instruction,
                                                const std::optional<std::string>&) const {
  std::vector<std::string> out;
  for (auto& clause : virtualenv::split_clauses(instruction, connectives_))
    if (!clause.empty()) out.push_back(std::move(clause));
  if (out.empty()) throw Error(ErrorCode::kUnplannableInstruction, "no subgoals in '" + instruction + "'");
  return out;
}

namespace {

bool holds(const Subgoal& s, const PredicateEvals& evals) {
  if (!s.checkpoint) return false;
  const auto it = evals.find(*s.checkpoint);
  return it != evals.end() && it->second == 1;
}

}  // namespace

ManagerDecision ReferenceManager::update(const std::vector<Subgoal>& subgoals, const std::optional<Feedback>& feedback,
                                         const PredicateEvals& evals_after, std::size_t consecutive_failures) const {
  ManagerDecision d{subgoals, false};
  if (feedback) {
    auto active = std::find_if(d.subgoals.begin(), d.subgoals.end(),
                               [](const Subgoal& s) { return s.status == SubgoalStatus::kActive; });
    if (active != d.subgoals.end()) {
      const bool done = active->checkpoint ? holds(*active, evals_after) : feedback->judgment == Judgment::kSuccess;
      if (done) {
        active->status = SubgoalStatus::kDone;
        for (auto it = active + 1; it != d.subgoals.end() && holds(*it, evals_after); ++it)
          it->status = SubgoalStatus::kDone;
      }
    }
  }
  const bool any_active = std::any_of(d.subgoals.begin(), d.subgoals.end(),
                                      [](const Subgoal& s) { return s.status == SubgoalStatus::kActive; });
  if (!any_active)
    for (auto& s : d.subgoals)
      if (s.status == SubgoalStatus::kPending) {
        s.status = SubgoalStatus::kActive;
        break;
      }
  if (failure_budget_ && consecutive_failures > *failure_budget_) d.abort = true;
  return d;
}

ScriptedWorker::ScriptedWorker(std::size_t plan_budget) : plan_budget_(plan_budget) {}

WorkerOutput ScriptedWorker::act(const WorkerInput& input, Rng&) const {
  const Subgoal* active = nullptr;
  for (const auto& s : input.subgoals)
    if (s.status == SubgoalStatus::kActive) active = &s;
  if (!active) return {Action::terminate(), "no active subgoal", "finished"};

  std::vector<Action> planned;
  std::string thought = "subgoal: " + active->text;
  try {
    planned = decomposer_.decompose_clause(active->text, input.env, input.env_state, plan_budget_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndecomposableInstruction) throw;
    thought += " (" + e.detail() + ")";
  }
  Action action = planned.empty() ? Action::key("Wait") : planned.front();
  std::string conclusion = active->text + ": " + action.describe();
  return {std::move(action), std::move(thought), std::move(conclusion)};
}

Feedback CheckpointReflector::reflect(const Transition& tr) const {
  if (tr.error) return {Judgment::kFailure, *tr.error};
  if (tr.active && tr.active->checkpoint && !holds(*tr.active, tr.evals_before) && holds(*tr.active, tr.evals_after))
    return {Judgment::kSuccess, "checkpoint " + *tr.active->checkpoint + " reached"};
  EnvState before = tr.before;
  before.step_counter = tr.after.step_counter;
  if (!(before == tr.after)) return {Judgment::kSuccess, "state changed"};
  return {Judgment::kFailure, "no effect: " + tr.action.describe()};
}

PatternNotetaker::PatternNotetaker(const std::string& pattern) : pattern_(pattern) {}

std::vector<std::string> PatternNotetaker::update(const std::vector<std::string>& notes, const EnvState& after) const {
  std::vector<std::string> out = notes;
  auto consider = [&](std::string note) {
    if (!std::regex_match(note, pattern_)) return;
    if (std::find(out.begin(), out.end(), note) == out.end()) out.push_back(std::move(note));
  };
  const auto obs = virtualenv::render(after);
  for (const auto& e : obs.elements) {
    const std::string& content = e.value.empty() ? e.text : e.value;
    if (!content.empty()) consider(e.id + ": " + content);
  }
  if (obs.toast) consider("toast: " + *obs.toast);
  return out;
}

RoleBundle reference_roles(const std::vector<std::string>& connectives, const std::string& note_pattern) {
  RoleBundle roles;
  roles.manager = std::make_shared<ReferenceManager>(connectives);
  roles.worker = std::make_shared<ScriptedWorker>();
  roles.reflector = std::make_shared<CheckpointReflector>();
  roles.notetaker = std::make_shared<PatternNotetaker>(note_pattern);
  return roles;
}

// ---- loop ----------------------------------------------------------------------

std::vector<Subgoal> plan_initial(const Manager& manager, const std::string& instruction,
                                  const std::optional<std::string>& knowledge) {
  if (instruction.empty()) throw Error(ErrorCode::kUnplannableInstruction, "empty instruction");
  const auto texts = manager.plan(instruction, knowledge);
  if (texts.empty()) throw Error(ErrorCode::kUnplannableInstruction, "empty plan");
  std::vector<Subgoal> out;
  for (const auto& t : texts) out.push_back({t, std::nullopt, SubgoalStatus::kPending});
  return out;
}

LoopStepResult loop_step(const SystemState& state, const RoleBundle& roles, const VirtualEnv& env, Rng& rng,
                         const ContextWindow& context) {
  LoopStepResult r{state, {}, false};
  SystemState& next = r.next;
  const WorkerInput input{state.instruction, state.env_state, state.subgoals, state.feedback,
                          state.notes,       context,         env};
  WorkerOutput out = roles.worker->act(input, rng);

  Step& step = r.step;
  step.index = state.t + 1;
  step.observation = virtualenv::render(state.env_state);
  step.action = out.action;
  step.thought = out.thought;
  step.conclusion = out.conclusion;
  const Subgoal* active = state.active();

  const PredicateEvals evals_before = env.evaluate(state.env_state);
  if (roles.banned && roles.banned(out.action)) {
    r.safety_stop = true;
    step.predicate_evals = evals_before;
    step.error = "safety stop: " + out.action.describe();
    next.feedback = Feedback{Judgment::kFailure, *step.error};
    next.t = state.t + 1;
    step.roles = trajectory::RoleAnnotation{active ? active->text : "", "FAILURE", *step.error, next.notes};
    return r;
  }

  virtualenv::StepResult result = env.step(state.env_state, out.action);
  const Feedback feedback = roles.reflector->reflect(
      {state.env_state, out.action, result.state, result.error, evals_before, result.predicate_evals, active});
  if (feedback.judgment == Judgment::kSuccess) next.notes = roles.notetaker->update(state.notes, result.state);
  next.consecutive_failures = feedback.judgment == Judgment::kSuccess ? 0 : state.consecutive_failures + 1;

  ManagerDecision decision =
      roles.manager->update(state.subgoals, feedback, result.predicate_evals, next.consecutive_failures);
  const Subgoal* new_active = nullptr;
  for (const auto& s : decision.subgoals)
    if (s.status == SubgoalStatus::kActive) new_active = &s;
  if (active && (!new_active || new_active->text != active->text || new_active->checkpoint != active->checkpoint))
    next.consecutive_failures = 0;
  next.subgoals = std::move(decision.subgoals);
  next.aborted = decision.abort;
  next.feedback = feedback;
  next.env_state = result.state;
  next.t = state.t + 1;

  step.predicate_evals = std::move(result.predicate_evals);
  step.error = result.error;
  step.roles = trajectory::RoleAnnotation{active ? active->text : "", std::string(to_string(feedback.judgment)),
                                          feedback.diagnostic, next.notes};
  return r;
}

VirtualEnv bind_task(const VirtualEnv& env, const taskgraph::ComposedTask& task) {
  VirtualEnv bound = env;
  for (const auto& p : env.predicates())
    if (std::find(task.checkpoint_ids.begin(), task.checkpoint_ids.end(), p.id) != task.checkpoint_ids.end())
      bound.register_predicate(p.instantiate(task.entity_bindings));
  return bound;
}

namespace {

trajectory::StopReason stop_reason_for(Termination t) {
  switch (t) {
    case Termination::kAllDone: return trajectory::StopReason::kTerminated;
    case Termination::kTimeout: return trajectory::StopReason::kMaxSteps;
    case Termination::kSafetyStop:
    case Termination::kAborted: return trajectory::StopReason::kError;
  }
  return trajectory::StopReason::kError;
}

}  // namespace

EpisodeResult run_episode(const taskgraph::ComposedTask& task, const RoleBundle& roles, const VirtualEnv& env,
                          const virtualenv::ScenarioSpec& scenario, const EpisodeLimits& limits,
                          const std::optional<std::string>& knowledge) {
  if (limits.max_steps == 0 || limits.timeout.count() <= 0 || limits.window == 0)
    throw Error(ErrorCode::kInvalidArgument, "episode limits must be positive");
  const VirtualEnv bound = bind_task(env, task);
  const auto deadline = std::chrono::steady_clock::now() + limits.timeout;
  Rng rng(derive_seed(scenario.seed, "agentloop", 0));

  EpisodeResult result;
  SystemState& state = result.final_state;
  state.instruction = task.instruction;
  state.knowledge = knowledge;
  state.env_state = bound.reset(scenario).first;
  state.subgoals = plan_initial(*roles.manager, task.instruction, knowledge);
  if (state.subgoals.size() == task.checkpoint_ids.size())
    for (std::size_t k = 0; k < state.subgoals.size(); ++k) state.subgoals[k].checkpoint = task.checkpoint_ids[k];
  state.subgoals = roles.manager->update(state.subgoals, std::nullopt, {}, 0).subgoals;

  Trajectory& traj = result.trajectory;
  traj.task = task;
  traj.device = state.env_state.device;
  result.termination = Termination::kTimeout;
  while (true) {
    if (state.all_done()) {
      result.termination = Termination::kAllDone;
      break;
    }
    if (state.t >= limits.max_steps || std::chrono::steady_clock::now() >= deadline) break;
    const ContextWindow context = build_context(traj.steps, limits.window);
    LoopStepResult r = loop_step(state, roles, bound, rng, context);
    traj.steps.push_back(std::move(r.step));
    state = std::move(r.next);
    if (r.safety_stop) {
      result.termination = Termination::kSafetyStop;
      break;
    }
    if (state.aborted) {
      result.termination = Termination::kAborted;
      break;
    }
  }
  traj.stop_reason = stop_reason_for(result.termination);
  return result;
}

}  // namespace flywheel::agentloop
