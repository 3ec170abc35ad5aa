#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/device.hpp"
#include "flywheel/taskgraph.hpp"

namespace flywheel::virtualenv {

struct Bounds {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool contains(int px, int py) const {
    return px >= x && py >= y && px < x + width && py < y + height;
  }
  bool operator==(const Bounds&) const = default;
};

struct Element {
  std::string kind;  // container, label, button, text_field, text_area, list_item, slider
  std::string text;
  Bounds bounds;
  bool focused = false;
  std::string value;
  bool visible = true;
  std::string parent;  // empty for roots
  bool operator==(const Element&) const = default;
};

// Structural stand-in for a screenshot plus the simulator's hidden state.
struct EnvState {
  std::string app_id;
  std::map<std::string, Element> ui_tree;
  std::string clipboard;
  std::optional<std::string> toast;
  std::uint64_t step_counter = 0;
  std::map<std::string, std::int64_t> counters;  // hidden
  DeviceFamily device = DeviceFamily::kDesktop;
  bool operator==(const EnvState&) const = default;
};

struct ObservedElement {
  std::string id;
  std::string kind;
  std::string text;
  std::string value;
  Bounds bounds;
  bool focused = false;
  bool operator==(const ObservedElement&) const = default;
};

// What the agent sees: visible elements only, never counters.
struct Observation {
  std::string app_id;
  DeviceFamily device = DeviceFamily::kDesktop;
  std::vector<ObservedElement> elements;
  std::optional<std::string> toast;
  std::optional<std::string> error;  // set when the producing action was illegal

  const ObservedElement* find(const std::string& id) const;
  // Plain-text screen dump, one element per line.
  std::string render_text() const;
  bool operator==(const Observation&) const = default;
};

Observation render(const EnvState& state);

enum class ActionKind { kClick, kType, kScroll, kDrag, kKey, kToolCall, kTerminate };

std::string_view to_string(ActionKind kind);
ActionKind parse_action_kind(std::string_view name);

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

using Target = std::variant<std::string, Point>;

struct Action {
  ActionKind kind = ActionKind::kKey;
  std::optional<Target> target;
  // typed text, key name, scroll direction, drag destination, or answer
  std::optional<std::string> text;
  std::string tool_name;
  std::map<std::string, std::string> arguments;

  static Action click(std::string element_id);
  static Action click_at(Point p);
  static Action type(std::string text);
  static Action type_into(std::string element_id, std::string text);
  static Action scroll(std::string direction = "down");
  static Action drag(std::string element_id, std::string destination);
  static Action key(std::string name);
  static Action tool_call(std::string name, std::map<std::string, std::string> arguments = {});
  static Action terminate(std::optional<std::string> answer = std::nullopt);

  // Element id target, if the target is one.
  const std::string* target_id() const;
  std::string describe() const;
  bool operator==(const Action&) const = default;
};

// Returns a reason when the action violates its kind's shape requirements.
std::optional<std::string> malformed_reason(const Action& action);

// ---- declarative predicates -------------------------------------------------

enum class Attribute { kText, kValue, kKind, kFocused, kVisible };
enum class StringOp { kEq, kNe, kContains, kNotContains };
enum class Comparison { kEq, kNe, kLt, kLe, kGt, kGe };

struct ElementTest {
  std::string element;
  Attribute attribute = Attribute::kValue;
  StringOp op = StringOp::kEq;
  std::string operand;
  bool operator==(const ElementTest&) const = default;
};

// Compares a hidden counter (or "step_counter").
struct CounterTest {
  std::string counter;
  Comparison cmp = Comparison::kEq;
  std::int64_t value = 0;
  bool operator==(const CounterTest&) const = default;
};

// Counts elements whose attribute satisfies (op, operand), then compares.
struct CountTest {
  Attribute attribute = Attribute::kKind;
  StringOp op = StringOp::kEq;
  std::string operand;
  Comparison cmp = Comparison::kGe;
  std::int64_t value = 0;
  bool operator==(const CountTest&) const = default;
};

using Clause = std::variant<ElementTest, CounterTest, CountTest>;

// Conjunction of clauses; an empty conjunction is true. Missing elements and
// counters make their clause false, so evaluation is total.
struct CheckpointPredicate {
  std::string id;
  std::vector<Clause> clauses;

  bool evaluate(const EnvState& state) const;
  // Substitutes `{slot}` placeholders in operands and element names.
  CheckpointPredicate instantiate(const taskgraph::EntityBindings& bindings) const;
  bool operator==(const CheckpointPredicate&) const = default;
};

// Guards see observations only; a CounterTest in a guard is always false.
bool evaluate_guard(const std::vector<Clause>& clauses, const Observation& observation);

using PredicateEvals = std::map<std::string, int>;

struct ScenarioSpec {
  std::uint64_t seed = 0;
  std::string initial_content;
  std::optional<DeviceFamily> device;  // environment default when unset
};

}  // namespace flywheel::virtualenv
