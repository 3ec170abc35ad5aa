#include "flywheel/virtualenv.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <regex>
#include <sstream>

#include "environments.hpp"
#include "flywheel/error.hpp"
#include "flywheel/json_io.hpp"

namespace flywheel::virtualenv {

VirtualEnv::VirtualEnv(std::shared_ptr<const EnvironmentModel> model,
                       std::vector<CheckpointPredicate> predicates)
    : model_(std::move(model)) {
  for (auto& p : predicates) register_predicate(std::move(p));
}

std::pair<EnvState, Observation> VirtualEnv::reset(const ScenarioSpec& scenario) const {
  EnvState state = model_->initial_state(scenario);
  Observation obs = render(state);
  return {std::move(state), std::move(obs)};
}

StepResult VirtualEnv::step(const EnvState& state, const Action& action) const {
  auto illegal = [&](std::string why) {
    StepResult r{state, render(state), evaluate(state), std::move(why)};
    r.observation.error = r.error;
    return r;
  };
  if (auto why = malformed_reason(action)) return illegal(*why);

  EnvState next = state;
  next.toast.reset();
  if (action.kind == ActionKind::kTerminate) {
    next.counters["terminated"] = 1;
  } else if (auto why = model_->apply(next, action)) {
    return illegal(*why);
  }
  ++next.step_counter;
  Observation obs = render(next);
  PredicateEvals evals = evaluate(next);
  return {std::move(next), std::move(obs), std::move(evals), std::nullopt};
}

PredicateEvals VirtualEnv::evaluate(const EnvState& state) const {
  PredicateEvals evals;
  for (const auto& p : predicates_) evals[p.id] = p.evaluate(state) ? 1 : 0;
  return evals;
}

void VirtualEnv::register_predicate(CheckpointPredicate predicate) {
  const auto it = std::find_if(predicates_.begin(), predicates_.end(),
                               [&](const CheckpointPredicate& p) { return p.id == predicate.id; });
  if (it != predicates_.end())
    *it = std::move(predicate);
  else
    predicates_.push_back(std::move(predicate));
}

std::set<std::string> VirtualEnv::checkpoint_ids() const {
  std::set<std::string> ids;
  for (const auto& p : predicates_) ids.insert(p.id);
  return ids;
}

void EnvironmentRegistry::add(std::shared_ptr<const EnvironmentModel> model) {
  const std::string kind = model->kind();
  models_[kind] = std::move(model);
}

VirtualEnv EnvironmentRegistry::create(const std::string& kind) const {
  const auto it = models_.find(kind);
  if (it == models_.end()) throw Error(ErrorCode::kUnknownEnvironment, kind);
  return VirtualEnv(it->second, it->second->builtin_predicates());
}

std::vector<std::string> EnvironmentRegistry::kinds() const {
  std::vector<std::string> out;
  for (const auto& [kind, model] : models_) out.push_back(kind);
  return out;
}

const EnvironmentRegistry& default_registry() {
  static const EnvironmentRegistry registry = [] {
    EnvironmentRegistry r;
    r.add(make_doc_editor());
    r.add(make_list_browser());
    r.add(make_form_flow());
    return r;
  }();
  return registry;
}

std::pair<EnvState, Observation> reset(const std::string& env_kind, const ScenarioSpec& scenario,
                                       const EnvironmentRegistry& registry) {
  return registry.create(env_kind).reset(scenario);
}

std::vector<CheckpointPredicate> parse_predicates(const std::string& dag_document) {
  try {
    const auto doc = nlohmann::json::parse(dag_document);
    if (!doc.contains("predicates")) return {};
    return doc.at("predicates").get<std::vector<CheckpointPredicate>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

std::vector<CheckpointPredicate> load_predicates(const std::string& dag_file) {
  std::ifstream in(dag_file);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + dag_file);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_predicates(buffer.str());
}

// ---- scripted rollouts -------------------------------------------------------

ScriptedPolicy ScriptedPolicy::sequence(const std::vector<Action>& actions) {
  ScriptedPolicy policy;
  for (const auto& a : actions) policy.rules.push_back({{}, a, true});
  return policy;
}

trajectory::Trajectory rollout_scripted(const VirtualEnv& env, const ScenarioSpec& scenario,
                                        const ScriptedPolicy& policy,
                                        const std::vector<CheckpointPredicate>& predicates,
                                        std::size_t max_steps, const taskgraph::ComposedTask& task) {
  VirtualEnv local = env;
  for (const auto& p : predicates) local.register_predicate(p);

  trajectory::Trajectory traj;
  traj.task = task;
  auto [state, obs] = local.reset(scenario);
  traj.device = state.device;
  std::vector<bool> retired(policy.rules.size(), false);

  traj.stop_reason = trajectory::StopReason::kMaxSteps;
  for (std::size_t t = 1; t <= max_steps; ++t) {
    std::optional<std::size_t> fired;
    for (std::size_t r = 0; r < policy.rules.size(); ++r) {
      if (retired[r] || !evaluate_guard(policy.rules[r].guard, obs)) continue;
      fired = r;
      break;
    }
    if (!fired) {
      traj.stop_reason = trajectory::StopReason::kGuardExhaustion;
      break;
    }
    const ScriptRule& rule = policy.rules[*fired];
    if (rule.once) retired[*fired] = true;

    StepResult result = local.step(state, rule.action);
    trajectory::Step step;
    step.index = t;
    step.observation = std::move(obs);
    step.action = rule.action;
    step.predicate_evals = std::move(result.predicate_evals);
    step.error = result.error;
    traj.steps.push_back(std::move(step));

    state = std::move(result.state);
    obs = std::move(result.observation);
    if (rule.action.kind == ActionKind::kTerminate && !result.error) {
      traj.stop_reason = trajectory::StopReason::kTerminated;
      break;
    }
  }
  if (max_steps == 0 && policy.rules.empty())
    traj.stop_reason = trajectory::StopReason::kGuardExhaustion;
  return traj;
}

// ---- decomposition -------------------------------------------------------------

std::vector<std::string> split_clauses(const std::string& instruction,
                                       const std::vector<std::string>& connectives) {
  std::vector<std::string> clauses;
  std::size_t pos = 0;
  while (true) {
    std::size_t best = std::string::npos;
    std::size_t best_len = 0;
    for (const auto& c : connectives) {
      if (c.empty()) continue;
      const std::size_t at = instruction.find(c, pos);
      if (at < best || (at == best && c.size() > best_len)) {
        best = at;
        best_len = c.size();
      }
    }
    if (best == std::string::npos) {
      clauses.push_back(instruction.substr(pos));
      break;
    }
    clauses.push_back(instruction.substr(pos, best - pos));
    pos = best + best_len;
  }
  return clauses;
}

namespace {

// Emits actions while simulating them, so each rule can look at the state its
// own earlier actions produced.
class Planner {
 public:
  Planner(const VirtualEnv& env, EnvState state, std::size_t budget)
      : env_(env), state_(std::move(state)), budget_(budget) {}

  const EnvState& state() const { return state_; }
  bool exhausted() const { return actions_.size() >= budget_; }

  const Element* element(const std::string& id) const {
    const auto it = state_.ui_tree.find(id);
    return it == state_.ui_tree.end() ? nullptr : &it->second;
  }

  bool emit(const Action& action) {
    if (exhausted()) return false;
    StepResult r = env_.step(state_, action);
    if (r.illegal())
      throw Error(ErrorCode::kUndecomposableInstruction,
                  "planned action " + action.describe() + " is illegal: " + *r.error);
    state_ = std::move(r.state);
    actions_.push_back(action);
    return true;
  }

  std::vector<Action> take() { return std::move(actions_); }

 private:
  const VirtualEnv& env_;
  EnvState state_;
  std::size_t budget_;
  std::vector<Action> actions_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// `note` -> note_field when present, else the bare name.
std::string field_id(const Planner& p, const std::string& name) {
  const std::string n = lower(name);
  if (p.element(n + "_field")) return n + "_field";
  return n;
}

void focus_then_type(Planner& p, const std::string& field, const std::string& text) {
  const Element* e = p.element(field);
  if (e == nullptr) throw Error(ErrorCode::kUndecomposableInstruction, "no field '" + field + "'");
  if (e->value.find(text) != std::string::npos) return;
  if (!e->focused) p.emit(Action::click(field));
  p.emit(Action::type(text));
}

std::optional<std::string> find_item(const Planner& p, const std::string& text) {
  for (const auto& [id, e] : p.state().ui_tree)
    if (e.kind == "list_item" && e.text == text) return id;
  return std::nullopt;
}

// Scrolls until `id` is visible; stops early if the budget runs out.
void reveal(Planner& p, const std::string& id) {
  const auto idx = std::stoll(id.substr(id.find('_') + 1));
  while (!p.element(id)->visible && !p.exhausted()) {
    const auto offset = p.state().counters.at("offset");
    p.emit(Action::scroll(idx < offset ? "up" : "down"));
  }
}

using Handler = std::function<void(Planner&, const std::smatch&)>;

struct Rule {
  std::regex pattern;
  Handler handler;
};

const std::vector<Rule>& rules() {
  static const std::vector<Rule> table = [] {
    const auto icase = std::regex::icase;
    std::vector<Rule> r;
    r.push_back({std::regex(R"(open the (\w+) editor)", icase), [](Planner& p, const std::smatch& m) {
                   const std::string field = field_id(p, m[1]);
                   const Element* e = p.element(field);
                   if (e == nullptr) throw Error(ErrorCode::kUndecomposableInstruction, "no field '" + field + "'");
                   if (!e->focused) p.emit(Action::click(field));
                 }});
    r.push_back({std::regex(R"(type (.+) into the (\w+))", icase), [](Planner& p, const std::smatch& m) {
                   focus_then_type(p, field_id(p, m[2]), m[1]);
                 }});
    r.push_back({std::regex(R"((?:fill in|enter) the (\w+) with (.+))", icase),
                 [](Planner& p, const std::smatch& m) { focus_then_type(p, field_id(p, m[1]), m[2]); }});
    r.push_back({std::regex(R"(save the document)", icase), [](Planner& p, const std::smatch&) {
                   const Element* status = p.element("status_label");
                   if (status == nullptr) throw Error(ErrorCode::kUndecomposableInstruction, "nothing to save");
                   if (status->text != "Saved") p.emit(Action::click("save_button"));
                 }});
    r.push_back({std::regex(R"(scroll to the bottom)", icase), [](Planner& p, const std::smatch&) {
                   const Element* end = p.element("end_marker");
                   if (end == nullptr) throw Error(ErrorCode::kUndecomposableInstruction, "no scrollable list");
                   while (!p.element("end_marker")->visible && p.emit(Action::scroll("down"))) {
                   }
                 }});
    r.push_back({std::regex(R"(scroll to the top)", icase), [](Planner& p, const std::smatch&) {
                   if (!p.state().counters.count("offset"))
                     throw Error(ErrorCode::kUndecomposableInstruction, "no scrollable list");
                   while (p.state().counters.at("offset") > 0 && p.emit(Action::scroll("up"))) {
                   }
                 }});
    r.push_back({std::regex(R"((?:open the contact|select) (.+))", icase), [](Planner& p, const std::smatch& m) {
                   const auto id = find_item(p, m[1]);
                   if (!id) throw Error(ErrorCode::kUndecomposableInstruction, "no item '" + m[1].str() + "'");
                   reveal(p, *id);
                   p.emit(Action::click(*id));
                 }});
    r.push_back({std::regex(R"(move (.+) to the top)", icase), [](Planner& p, const std::smatch& m) {
                   const auto id = find_item(p, m[1]);
                   if (!id) throw Error(ErrorCode::kUndecomposableInstruction, "no item '" + m[1].str() + "'");
                   if (*id == "item_00") return;
                   reveal(p, *id);
                   p.emit(Action::drag(*id, "item_00"));
                 }});
    r.push_back({std::regex(R"(go to the next page)", icase),
                 [](Planner& p, const std::smatch&) { p.emit(Action::click("next_button")); }});
    r.push_back({std::regex(R"(set the (\w+) to (\d+))", icase), [](Planner& p, const std::smatch& m) {
                   const std::string slider = lower(m[1]) + "_slider";
                   const Element* e = p.element(slider);
                   if (e == nullptr) throw Error(ErrorCode::kUndecomposableInstruction, "no slider '" + slider + "'");
                   if (e->value != m[2].str()) p.emit(Action::drag(slider, m[2]));
                 }});
    r.push_back({std::regex(R"(submit the form)", icase), [](Planner& p, const std::smatch&) {
                   if (p.element("submit_button") == nullptr)
                     throw Error(ErrorCode::kUndecomposableInstruction, "no form to submit");
                   while (!p.element("submit_button")->visible && p.emit(Action::click("next_button"))) {
                   }
                   p.emit(Action::click("submit_button"));
                 }});
    r.push_back({std::regex(R"(count the words)", icase),
                 [](Planner& p, const std::smatch&) { p.emit(Action::tool_call("word_count")); }});
    r.push_back({std::regex(R"(replace (.+) with (.+))", icase), [](Planner& p, const std::smatch& m) {
                   p.emit(Action::tool_call("replace", {{"find", m[1]}, {"with", m[2]}}));
                 }});
    r.push_back({std::regex(R"(press ([\w+]+))", icase),
                 [](Planner& p, const std::smatch& m) { p.emit(Action::key(m[1])); }});
    return r;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n.");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\n.");
  return s.substr(b, e - b + 1);
}

void plan_clause(Planner& planner, const std::string& raw_clause) {
  const std::string clause = trim(raw_clause);
  if (clause.empty()) throw Error(ErrorCode::kUndecomposableInstruction, "empty instruction");
  for (const auto& rule : rules()) {
    std::smatch m;
    if (std::regex_match(clause, m, rule.pattern)) {
      rule.handler(planner, m);
      return;
    }
  }
  throw Error(ErrorCode::kUndecomposableInstruction, "no rule matches '" + clause + "'");
}

}  // namespace

RuleBasedDecomposer::RuleBasedDecomposer(std::vector<std::string> connectives)
    : connectives_(std::move(connectives)) {}

std::vector<Action> RuleBasedDecomposer::decompose(const std::string& instruction, const VirtualEnv& env,
                                                   const EnvState& state, std::size_t max_steps) const {
  Planner planner(env, state, max_steps);
  for (const auto& clause : split_clauses(instruction, connectives_)) plan_clause(planner, clause);
  return planner.take();
}

std::vector<Action> RuleBasedDecomposer::decompose_clause(const std::string& clause, const VirtualEnv& env,
                                                          const EnvState& state, std::size_t max_steps) const {
  Planner planner(env, state, max_steps);
  plan_clause(planner, clause);
  return planner.take();
}

std::vector<Action> decompose_instruction(const std::string& instruction, const VirtualEnv& env,
                                          const EnvState& state, const Decomposer& decomposer,
                                          std::size_t max_steps) {
  return decomposer.decompose(instruction, env, state, max_steps);
}

}  // namespace flywheel::virtualenv
