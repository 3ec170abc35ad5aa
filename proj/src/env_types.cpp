#include <sstream>

#include "flywheel/env_types.hpp"
#include "flywheel/error.hpp"

namespace flywheel::virtualenv {

const ObservedElement* Observation::find(const std::string& id) const {
  for (const auto& e : elements)
    if (e.id == id) return &e;
  return nullptr;
}

std::string Observation::render_text() const {
  std::ostringstream out;
  out << "[" << app_id << " @ " << to_string(device) << "]\n";
  for (const auto& e : elements) {
    out << (e.focused ? "* " : "  ") << e.id << " <" << e.kind << "> (" << e.bounds.x << ","
        << e.bounds.y << " " << e.bounds.width << "x" << e.bounds.height << ")";
    if (!e.text.empty()) out << " \"" << e.text << "\"";
    if (!e.value.empty()) out << " = \"" << e.value << "\"";
    out << "\n";
  }
  if (toast) out << "toast: " << *toast << "\n";
  if (error) out << "error: " << *error << "\n";
  return out.str();
}

Observation render(const EnvState& state) {
  Observation obs;
  obs.app_id = state.app_id;
  obs.device = state.device;
  obs.toast = state.toast;
  for (const auto& [id, e] : state.ui_tree) {
    if (!e.visible) continue;
    obs.elements.push_back({id, e.kind, e.text, e.value, e.bounds, e.focused});
  }
  return obs;
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kClick: return "click";
    case ActionKind::kType: return "type";
    case ActionKind::kScroll: return "scroll";
    case ActionKind::kDrag: return "drag";
    case ActionKind::kKey: return "key";
    case ActionKind::kToolCall: return "tool_call";
    case ActionKind::kTerminate: return "terminate";
  }
  return "unknown";
}

ActionKind parse_action_kind(std::string_view name) {
  for (auto kind : {ActionKind::kClick, ActionKind::kType, ActionKind::kScroll, ActionKind::kDrag,
                    ActionKind::kKey, ActionKind::kToolCall, ActionKind::kTerminate})
    if (to_string(kind) == name) return kind;
  throw Error(ErrorCode::kParseError, "unknown action kind '" + std::string(name) + "'");
}

Action Action::click(std::string element_id) {
  return {ActionKind::kClick, Target{std::move(element_id)}, std::nullopt, {}, {}};
}
Action Action::click_at(Point p) { return {ActionKind::kClick, Target{p}, std::nullopt, {}, {}}; }
Action Action::type(std::string text) {
  return {ActionKind::kType, std::nullopt, std::move(text), {}, {}};
}
Action Action::type_into(std::string element_id, std::string text) {
  return {ActionKind::kType, Target{std::move(element_id)}, std::move(text), {}, {}};
}
Action Action::scroll(std::string direction) {
  return {ActionKind::kScroll, std::nullopt, std::move(direction), {}, {}};
}
Action Action::drag(std::string element_id, std::string destination) {
  return {ActionKind::kDrag, Target{std::move(element_id)}, std::move(destination), {}, {}};
}
Action Action::key(std::string name) { return {ActionKind::kKey, std::nullopt, std::move(name), {}, {}}; }
Action Action::tool_call(std::string name, std::map<std::string, std::string> arguments) {
  return {ActionKind::kToolCall, std::nullopt, std::nullopt, std::move(name), std::move(arguments)};
}
Action Action::terminate(std::optional<std::string> answer) {
  return {ActionKind::kTerminate, std::nullopt, std::move(answer), {}, {}};
}

const std::string* Action::target_id() const {
  return target ? std::get_if<std::string>(&*target) : nullptr;
}

std::string Action::describe() const {
  std::ostringstream out;
  out << to_string(kind) << "(";
  bool first = true;
  auto sep = [&] {
    if (!first) out << ", ";
    first = false;
  };
  if (target) {
    sep();
    if (const auto* id = std::get_if<std::string>(&*target))
      out << *id;
    else {
      const auto& p = std::get<Point>(*target);
      out << "(" << p.x << "," << p.y << ")";
    }
  }
  if (!tool_name.empty()) {
    sep();
    out << tool_name;
    for (const auto& [k, v] : arguments) out << " " << k << "=\"" << v << "\"";
  }
  if (text) {
    sep();
    out << "\"" << *text << "\"";
  }
  out << ")";
  return out.str();
}

std::optional<std::string> malformed_reason(const Action& action) {
  switch (action.kind) {
    case ActionKind::kClick:
    case ActionKind::kDrag:
      if (!action.target) return std::string(to_string(action.kind)) + " requires a target";
      if (action.kind == ActionKind::kDrag && !action.text) return "drag requires a destination";
      break;
    case ActionKind::kType:
      if (!action.text) return "type requires text";
      break;
    case ActionKind::kKey:
      if (!action.text || action.text->empty()) return "key requires a key name";
      break;
    case ActionKind::kToolCall:
      if (action.tool_name.empty()) return "tool_call requires a tool name";
      break;
    case ActionKind::kScroll:
    case ActionKind::kTerminate:
      break;
  }
  return std::nullopt;
}

namespace {

std::string attribute_of(const std::string& kind, const std::string& text, const std::string& value,
                         bool focused, bool visible, Attribute attr) {
  switch (attr) {
    case Attribute::kText: return text;
    case Attribute::kValue: return value;
    case Attribute::kKind: return kind;
    case Attribute::kFocused: return focused ? "true" : "false";
    case Attribute::kVisible: return visible ? "true" : "false";
  }
  return {};
}

bool apply_op(const std::string& actual, StringOp op, const std::string& operand) {
  switch (op) {
    case StringOp::kEq: return actual == operand;
    case StringOp::kNe: return actual != operand;
    case StringOp::kContains: return actual.find(operand) != std::string::npos;
    case StringOp::kNotContains: return actual.find(operand) == std::string::npos;
  }
  return false;
}

bool compare(std::int64_t lhs, Comparison cmp, std::int64_t rhs) {
  switch (cmp) {
    case Comparison::kEq: return lhs == rhs;
    case Comparison::kNe: return lhs != rhs;
    case Comparison::kLt: return lhs < rhs;
    case Comparison::kLe: return lhs <= rhs;
    case Comparison::kGt: return lhs > rhs;
    case Comparison::kGe: return lhs >= rhs;
  }
  return false;
}

struct StateView {
  const EnvState& state;

  std::optional<std::string> attribute(const std::string& id, Attribute attr) const {
    const auto it = state.ui_tree.find(id);
    if (it == state.ui_tree.end()) return std::nullopt;
    const Element& e = it->second;
    return attribute_of(e.kind, e.text, e.value, e.focused, e.visible, attr);
  }
  std::optional<std::int64_t> counter(const std::string& name) const {
    if (name == "step_counter") return static_cast<std::int64_t>(state.step_counter);
    const auto it = state.counters.find(name);
    if (it == state.counters.end()) return std::nullopt;
    return it->second;
  }
  std::int64_t count(Attribute attr, StringOp op, const std::string& operand) const {
    std::int64_t n = 0;
    for (const auto& [id, e] : state.ui_tree)
      if (apply_op(attribute_of(e.kind, e.text, e.value, e.focused, e.visible, attr), op, operand)) ++n;
    return n;
  }
};

struct ObservationView {
  const Observation& obs;

  std::optional<std::string> attribute(const std::string& id, Attribute attr) const {
    const ObservedElement* e = obs.find(id);
    if (e == nullptr) return std::nullopt;
    return attribute_of(e->kind, e->text, e->value, e->focused, true, attr);
  }
  std::optional<std::int64_t> counter(const std::string&) const { return std::nullopt; }
  std::int64_t count(Attribute attr, StringOp op, const std::string& operand) const {
    std::int64_t n = 0;
    for (const auto& e : obs.elements)
      if (apply_op(attribute_of(e.kind, e.text, e.value, e.focused, true, attr), op, operand)) ++n;
    return n;
  }
};

template <typename View>
bool evaluate_clauses(const std::vector<Clause>& clauses, const View& view) {
  for (const auto& clause : clauses) {
    bool holds = false;
    if (const auto* t = std::get_if<ElementTest>(&clause)) {
      const auto actual = view.attribute(t->element, t->attribute);
      holds = actual && apply_op(*actual, t->op, t->operand);
    } else if (const auto* c = std::get_if<CounterTest>(&clause)) {
      const auto actual = view.counter(c->counter);
      holds = actual && compare(*actual, c->cmp, c->value);
    } else {
      const auto& n = std::get<CountTest>(clause);
      holds = compare(view.count(n.attribute, n.op, n.operand), n.cmp, n.value);
    }
    if (!holds) return false;
  }
  return true;
}

}  // namespace

bool CheckpointPredicate::evaluate(const EnvState& state) const {
  return evaluate_clauses(clauses, StateView{state});
}

CheckpointPredicate CheckpointPredicate::instantiate(const taskgraph::EntityBindings& bindings) const {
  CheckpointPredicate out{id, {}};
  for (const auto& clause : clauses) {
    if (const auto* t = std::get_if<ElementTest>(&clause)) {
      ElementTest copy = *t;
      copy.element = taskgraph::instantiate(copy.element, bindings);
      copy.operand = taskgraph::instantiate(copy.operand, bindings);
      out.clauses.emplace_back(std::move(copy));
    } else if (const auto* n = std::get_if<CountTest>(&clause)) {
      CountTest copy = *n;
      copy.operand = taskgraph::instantiate(copy.operand, bindings);
      out.clauses.emplace_back(std::move(copy));
    } else {
      out.clauses.push_back(clause);
    }
  }
  return out;
}

bool evaluate_guard(const std::vector<Clause>& clauses, const Observation& observation) {
  return evaluate_clauses(clauses, ObservationView{observation});
}

}  // namespace flywheel::virtualenv
