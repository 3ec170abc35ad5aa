#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "flywheel/agentloop.hpp"
#include "test_support.hpp"

namespace flywheel::agentloop {
namespace {

using fixture::doc_editor_episode;

class WaitWorker final : public Worker {
 public:
  WorkerOutput act(const WorkerInput&, Rng&) const override { return {Action::key("Wait"), "idle", ""}; }
};

class FixedWorker final : public Worker {
 public:
  explicit FixedWorker(Action a) : action_(std::move(a)) {}
  WorkerOutput act(const WorkerInput&, Rng&) const override { return {action_, "try", "tried"}; }

 private:
  Action action_;
};

// Records a note on every call regardless of the state.
class CountingNotetaker final : public Notetaker {
 public:
  std::vector<std::string> update(const std::vector<std::string>& notes, const EnvState&) const override {
    auto out = notes;
    out.push_back("note " + std::to_string(notes.size()));
    return out;
  }
};

Step step_with_conclusion(std::size_t index, std::string conclusion) {
  Step s;
  s.index = index;
  s.conclusion = std::move(conclusion);
  return s;
}

// Initial state as run_episode prepares it.
SystemState start_state(const fixture::DocEditorEpisode& fx, const RoleBundle& roles, const VirtualEnv& env) {
  SystemState s;
  s.instruction = fx.task.instruction;
  s.env_state = env.reset({}).first;
  s.subgoals = plan_initial(*roles.manager, fx.task.instruction, std::nullopt);
  for (std::size_t k = 0; k < s.subgoals.size(); ++k) s.subgoals[k].checkpoint = fx.task.checkpoint_ids[k];
  s.subgoals = roles.manager->update(s.subgoals, std::nullopt, {}, 0).subgoals;
  return s;
}

TEST(PlanInitial, InvertsTheComposer) {
  const auto fx = doc_editor_episode();
  EXPECT_EQ(fx.task.instruction, "open the note editor, then type milk into the note, then save the document");
  const auto roles = reference_roles();
  const auto plan = plan_initial(*roles.manager, fx.task.instruction, std::nullopt);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].text, "open the note editor");
  EXPECT_EQ(plan[1].text, taskgraph::instantiate(fx.dag.node("write_text").template_text, {{"text", "milk"}}));
  EXPECT_EQ(plan[2].text, "save the document");
  for (const auto& s : plan) EXPECT_EQ(s.status, SubgoalStatus::kPending);
}

TEST(PlanInitial, SingleClauseAndEmpty) {
  const auto roles = reference_roles();
  const auto one = plan_initial(*roles.manager, "save the document", std::nullopt);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, "save the document");
  EXPECT_FLYWHEEL_ERROR(plan_initial(*roles.manager, "", std::nullopt), ErrorCode::kUnplannableInstruction);
}

TEST(LoopStep, CheckpointHitMarksSubgoalDone) {
  const auto fx = doc_editor_episode();
  const auto roles = reference_roles();
  const auto env = bind_task(fx.env, fx.task);
  const auto state = start_state(fx, roles, env);
  ASSERT_EQ(state.active()->text, "open the note editor");

  Rng rng(1);
  const auto r = loop_step(state, roles, env, rng, build_context({}, 2));
  EXPECT_FALSE(r.safety_stop);
  EXPECT_EQ(r.step.action, Action::click("note_field"));
  EXPECT_TRUE(r.next.env_state.ui_tree.at("note_field").focused);
  ASSERT_TRUE(r.next.feedback.has_value());
  EXPECT_EQ(r.next.feedback->judgment, Judgment::kSuccess);
  EXPECT_EQ(r.next.subgoals[0].status, SubgoalStatus::kDone);
  EXPECT_EQ(r.next.subgoals[1].status, SubgoalStatus::kActive);
  EXPECT_GT(r.next.notes.size(), state.notes.size());
  ASSERT_TRUE(r.step.roles.has_value());
  EXPECT_EQ(r.step.roles->judgment, "SUCCESS");
  EXPECT_EQ(r.step.roles->notes, r.next.notes);
  EXPECT_EQ(r.next.t, 1u);
}

TEST(LoopStep, IllegalActionIsFailureWithNotesKept) {
  const auto fx = doc_editor_episode();
  auto roles = reference_roles();
  roles.worker = std::make_shared<FixedWorker>(Action::click("ghost"));
  const auto env = bind_task(fx.env, fx.task);
  auto state = start_state(fx, roles, env);
  state.notes = {"kept"};
  Rng rng(1);
  const auto r = loop_step(state, roles, env, rng, build_context({}, 2));
  EXPECT_EQ(r.next.feedback->judgment, Judgment::kFailure);
  EXPECT_FALSE(r.next.feedback->diagnostic.empty());
  EXPECT_EQ(r.next.notes, state.notes);
  EXPECT_TRUE(r.step.error.has_value());
  EXPECT_EQ(r.next.env_state, state.env_state);
  EXPECT_EQ(r.next.subgoals, state.subgoals);
}

TEST(LoopStep, SuccessWithNothingNewKeepsNotes) {
  const auto fx = doc_editor_episode();
  auto roles = reference_roles({", then "}, "^nothing matches this$");
  const auto env = bind_task(fx.env, fx.task);
  const auto state = start_state(fx, roles, env);
  Rng rng(1);
  const auto r = loop_step(state, roles, env, rng, build_context({}, 2));
  EXPECT_EQ(r.next.feedback->judgment, Judgment::kSuccess);
  EXPECT_TRUE(r.next.notes.empty());
}

TEST(RunEpisode, ScriptedRolesFinishAndAreAccepted) {
  const auto fx = doc_editor_episode();
  const auto result = run_episode(fx.task, reference_roles(), fx.env, {}, {});
  EXPECT_EQ(result.termination, Termination::kAllDone);
  EXPECT_EQ(result.trajectory.stop_reason, trajectory::StopReason::kTerminated);
  EXPECT_TRUE(std::holds_alternative<trajectory::Accepted>(trajectory::truncate_and_repair(result.trajectory, fx.dag)));
  EXPECT_EQ(result.trajectory.steps.size(), 3u);
  EXPECT_TRUE(result.final_state.all_done());
}

TEST(RunEpisode, IdleWorkerTimesOut) {
  const auto fx = doc_editor_episode();
  auto roles = reference_roles();
  roles.worker = std::make_shared<WaitWorker>();
  EpisodeLimits limits;
  limits.max_steps = 7;
  const auto result = run_episode(fx.task, roles, fx.env, {}, limits);
  EXPECT_EQ(result.termination, Termination::kTimeout);
  EXPECT_EQ(result.trajectory.steps.size(), 7u);
  EXPECT_EQ(result.trajectory.stop_reason, trajectory::StopReason::kMaxSteps);
}

TEST(RunEpisode, SingleStepIsNotAccepted) {
  const auto fx = doc_editor_episode();
  EpisodeLimits limits;
  limits.max_steps = 1;
  const auto result = run_episode(fx.task, reference_roles(), fx.env, {}, limits);
  EXPECT_EQ(result.termination, Termination::kTimeout);
  const auto c = trajectory::truncate_and_repair(result.trajectory, fx.dag);
  EXPECT_FALSE(std::holds_alternative<trajectory::Accepted>(c));
}

TEST(RunEpisode, FailureBudgetAborts) {
  const auto fx = doc_editor_episode();
  auto roles = reference_roles();
  roles.manager = std::make_shared<ReferenceManager>(std::vector<std::string>{", then "}, 2);
  roles.worker = std::make_shared<WaitWorker>();
  const auto result = run_episode(fx.task, roles, fx.env, {}, {});
  EXPECT_EQ(result.termination, Termination::kAborted);
  EXPECT_EQ(result.trajectory.steps.size(), 3u);
}

TEST(RunEpisode, BannedActionStopsBeforeExecuting) {
  const auto fx = doc_editor_episode();
  auto roles = reference_roles();
  roles.banned = [](const Action& a) { return a.kind == virtualenv::ActionKind::kType; };
  const auto result = run_episode(fx.task, roles, fx.env, {}, {});
  EXPECT_EQ(result.termination, Termination::kSafetyStop);
  ASSERT_EQ(result.trajectory.steps.size(), 2u);
  EXPECT_TRUE(result.trajectory.steps.back().error.has_value());
  EXPECT_EQ(result.final_state.env_state.ui_tree.at("note_field").value, "");
}

TEST(RunEpisode, NotesChangeOnlyOnSuccess) {
  for (const char* text : {"milk", "eggs", "bread"}) {
    const auto fx = doc_editor_episode(text);
    const auto result = run_episode(fx.task, reference_roles(), fx.env, {}, {});
    std::vector<std::string> notes;
    for (const auto& s : result.trajectory.steps) {
      ASSERT_TRUE(s.roles.has_value());
      if (s.roles->notes != notes) {
        EXPECT_EQ(s.roles->judgment, "SUCCESS");
      }
      notes = s.roles->notes;
    }
  }
}

TEST(RunEpisode, DeterministicAndNotetakerIsolated) {
  const auto fx = doc_editor_episode("eggs");
  virtualenv::ScenarioSpec scenario;
  scenario.seed = 42;
  const auto a = run_episode(fx.task, reference_roles(), fx.env, scenario, {});
  const auto b = run_episode(fx.task, reference_roles(), fx.env, scenario, {});
  EXPECT_EQ(a.trajectory, b.trajectory);

  auto other = reference_roles();
  other.notetaker = std::make_shared<CountingNotetaker>();
  const auto c = run_episode(fx.task, other, fx.env, scenario, {});
  ASSERT_EQ(c.trajectory.steps.size(), a.trajectory.steps.size());
  for (std::size_t i = 0; i < a.trajectory.steps.size(); ++i)
    EXPECT_EQ(c.trajectory.steps[i].action, a.trajectory.steps[i].action);
}

TEST(RunEpisode, InvalidLimits) {
  const auto fx = doc_editor_episode();
  EpisodeLimits limits;
  limits.window = 0;
  EXPECT_FLYWHEEL_ERROR(run_episode(fx.task, reference_roles(), fx.env, {}, limits), ErrorCode::kInvalidArgument);
}

TEST(BuildContext, TenStepsWindowTwo) {
  std::vector<Step> h;
  for (std::size_t i = 1; i <= 10; ++i) h.push_back(step_with_conclusion(i, "C" + std::to_string(i)));
  const auto w = build_context(h, 2);
  ASSERT_EQ(w.recent.size(), 2u);
  EXPECT_EQ(w.recent[0].index, 9u);
  EXPECT_EQ(w.recent[1].index, 10u);
  EXPECT_EQ(w.summary, "C1\nC2\nC3\nC4\nC5\nC6\nC7\nC8");
  EXPECT_EQ(w.summarized_turns, 8u);
}

TEST(BuildContext, ShortHistoryHasNoSummary) {
  const std::vector<Step> h{step_with_conclusion(1, "a"), step_with_conclusion(2, "b")};
  const auto w = build_context(h, 5);
  EXPECT_EQ(w.recent.size(), 2u);
  EXPECT_TRUE(w.summary.empty());
  EXPECT_EQ(w.summarized_turns, 0u);
  EXPECT_FLYWHEEL_ERROR(build_context(h, 0), ErrorCode::kInvalidArgument);
}

TEST(BuildContext, EmptyConclusionsAreSkippedInOrder) {
  std::vector<Step> h{step_with_conclusion(1, "opened"), step_with_conclusion(2, ""), Step{},
                      step_with_conclusion(4, "typed"), step_with_conclusion(5, "saved")};
  h[2].index = 3;
  const auto w = build_context(h, 1);
  EXPECT_EQ(w.summary, "opened\ntyped");
  EXPECT_EQ(w.summarized_turns, 4u);
}

// Going into turn t the window and the summary account for t-1 turns.
TEST(BuildContext, WindowConservation) {
  std::vector<Step> h;
  for (std::size_t t = 1; t <= 12; ++t) {
    for (std::size_t n : {1u, 2u, 3u, 7u}) {
      const auto w = build_context(h, n);
      EXPECT_EQ(w.recent.size() + w.summarized_turns, t - 1);
      EXPECT_LE(w.recent.size(), n);
    }
    h.push_back(step_with_conclusion(t, "c" + std::to_string(t)));
  }
}

}  // namespace
}  // namespace flywheel::agentloop
