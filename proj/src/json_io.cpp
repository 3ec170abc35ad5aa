#include "flywheel/json_io.hpp"

#include "flywheel/error.hpp"

namespace flywheel {

void to_json(nlohmann::json& j, DeviceFamily d) { j = std::string(to_string(d)); }
void from_json(const nlohmann::json& j, DeviceFamily& d) { d = parse_device(j.get<std::string>()); }

}  // namespace flywheel

namespace flywheel::taskgraph {

void to_json(nlohmann::json& j, const TaskPath& p) { j = p.nodes; }
void from_json(const nlohmann::json& j, TaskPath& p) { p.nodes = j.get<std::vector<NodeId>>(); }

void to_json(nlohmann::json& j, const ComposedTask& t) {
  j = {{"instruction", t.instruction},
       {"path", t.path},
       {"bindings", t.entity_bindings},
       {"checkpoints", t.checkpoint_ids}};
}

void from_json(const nlohmann::json& j, ComposedTask& t) {
  t.instruction = j.at("instruction").get<std::string>();
  t.path = j.at("path").get<TaskPath>();
  t.entity_bindings = j.at("bindings").get<EntityBindings>();
  t.checkpoint_ids = j.at("checkpoints").get<std::vector<std::string>>();
}

}  // namespace flywheel::taskgraph

namespace flywheel::virtualenv {

void to_json(nlohmann::json& j, const Bounds& b) { j = {b.x, b.y, b.width, b.height}; }
void from_json(const nlohmann::json& j, Bounds& b) {
  b = {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

void to_json(nlohmann::json& j, const ObservedElement& e) {
  j = {{"id", e.id}, {"kind", e.kind}, {"text", e.text}, {"value", e.value}, {"bounds", e.bounds}};
  if (e.focused) j["focused"] = true;
}

void from_json(const nlohmann::json& j, ObservedElement& e) {
  e.id = j.at("id").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.value = j.at("value").get<std::string>();
  e.bounds = j.at("bounds").get<Bounds>();
  e.focused = j.value("focused", false);
}

void to_json(nlohmann::json& j, const Observation& o) {
  j = {{"app_id", o.app_id}, {"device", o.device}, {"elements", o.elements}};
  if (o.toast) j["toast"] = *o.toast;
  if (o.error) j["error"] = *o.error;
}

void from_json(const nlohmann::json& j, Observation& o) {
  o.app_id = j.at("app_id").get<std::string>();
  o.device = j.at("device").get<DeviceFamily>();
  o.elements = j.at("elements").get<std::vector<ObservedElement>>();
  o.toast = j.contains("toast") ? std::optional(j.at("toast").get<std::string>()) : std::nullopt;
  o.error = j.contains("error") ? std::optional(j.at("error").get<std::string>()) : std::nullopt;
}

void to_json(nlohmann::json& j, const Action& a) {
  j = {{"kind", to_string(a.kind)}};
  if (a.target) {
    if (const auto* id = a.target_id())
      j["target"] = *id;
    else
      j["target"] = {std::get<Point>(*a.target).x, std::get<Point>(*a.target).y};
  }
  if (a.text) j["text"] = *a.text;
  if (!a.tool_name.empty()) j["tool"] = a.tool_name;
  if (!a.arguments.empty()) j["arguments"] = a.arguments;
}

void from_json(const nlohmann::json& j, Action& a) {
  a = Action{};
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  if (j.contains("target")) {
    const auto& t = j.at("target");
    if (t.is_string())
      a.target = Target{t.get<std::string>()};
    else
      a.target = Target{Point{t.at(0).get<int>(), t.at(1).get<int>()}};
  }
  if (j.contains("text")) a.text = j.at("text").get<std::string>();
  a.tool_name = j.value("tool", std::string{});
  if (j.contains("arguments")) a.arguments = j.at("arguments").get<std::map<std::string, std::string>>();
}

namespace {

template <typename E>
E lookup(const nlohmann::json& j, const std::vector<std::pair<E, std::string>>& names) {
  const std::string s = j.get<std::string>();
  for (const auto& [e, name] : names)
    if (name == s) return e;
  throw Error(ErrorCode::kParseError, "unknown predicate token '" + s + "'");
}

template <typename E>
std::string name_of(E e, const std::vector<std::pair<E, std::string>>& names) {
  for (const auto& [v, name] : names)
    if (v == e) return name;
  return "?";
}

const std::vector<std::pair<Attribute, std::string>> kAttributes = {
    {Attribute::kText, "text"}, {Attribute::kValue, "value"}, {Attribute::kKind, "kind"},
    {Attribute::kFocused, "focused"}, {Attribute::kVisible, "visible"}};
const std::vector<std::pair<StringOp, std::string>> kStringOps = {
    {StringOp::kEq, "eq"}, {StringOp::kNe, "ne"}, {StringOp::kContains, "contains"},
    {StringOp::kNotContains, "not_contains"}};
const std::vector<std::pair<Comparison, std::string>> kComparisons = {
    {Comparison::kEq, "eq"}, {Comparison::kNe, "ne"}, {Comparison::kLt, "lt"},
    {Comparison::kLe, "le"}, {Comparison::kGt, "gt"}, {Comparison::kGe, "ge"}};

}  // namespace

void to_json(nlohmann::json& j, const Clause& c) {
  if (const auto* t = std::get_if<ElementTest>(&c)) {
    j = {{"element", t->element}, {"attr", name_of(t->attribute, kAttributes)},
         {"op", name_of(t->op, kStringOps)}, {"value", t->operand}};
  } else if (const auto* k = std::get_if<CounterTest>(&c)) {
    j = {{"counter", k->counter}, {"cmp", name_of(k->cmp, kComparisons)}, {"value", k->value}};
  } else {
    const auto& n = std::get<CountTest>(c);
    j = {{"count", {{"attr", name_of(n.attribute, kAttributes)}, {"op", name_of(n.op, kStringOps)}, {"value", n.operand}}},
         {"cmp", name_of(n.cmp, kComparisons)},
         {"value", n.value}};
  }
}

void from_json(const nlohmann::json& j, Clause& c) {
  if (j.contains("element")) {
    c = ElementTest{j.at("element").get<std::string>(), lookup(j.value("attr", nlohmann::json("value")), kAttributes),
                    lookup(j.value("op", nlohmann::json("eq")), kStringOps), j.at("value").get<std::string>()};
  } else if (j.contains("counter")) {
    c = CounterTest{j.at("counter").get<std::string>(), lookup(j.value("cmp", nlohmann::json("eq")), kComparisons),
                    j.at("value").get<std::int64_t>()};
  } else if (j.contains("count")) {
    const auto& q = j.at("count");
    c = CountTest{lookup(q.value("attr", nlohmann::json("kind")), kAttributes),
                  lookup(q.value("op", nlohmann::json("eq")), kStringOps), q.at("value").get<std::string>(),
                  lookup(j.value("cmp", nlohmann::json("ge")), kComparisons), j.at("value").get<std::int64_t>()};
  } else {
    throw Error(ErrorCode::kParseError, "predicate clause needs 'element', 'counter' or 'count'");
  }
}

void to_json(nlohmann::json& j, const CheckpointPredicate& p) { j = {{"id", p.id}, {"all", p.clauses}}; }
void from_json(const nlohmann::json& j, CheckpointPredicate& p) {
  p.id = j.at("id").get<std::string>();
  p.clauses = j.at("all").get<std::vector<Clause>>();
}

}  // namespace flywheel::virtualenv

namespace flywheel::transport {

void to_json(nlohmann::json& j, const GenerationRecord& r) {
  j = {{"x_ids", r.prompt_ids}, {"y", r.output_text}, {"t_infer", r.output_ids}, {"logprob", r.sampler_logprob}};
}

void from_json(const nlohmann::json& j, GenerationRecord& r) {
  r.prompt_ids = j.at("x_ids").get<TokenIds>();
  r.output_text = j.at("y").get<std::string>();
  r.output_ids = j.at("t_infer").get<TokenIds>();
  r.sampler_logprob = j.at("logprob").get<double>();
}

}  // namespace flywheel::transport

namespace flywheel::trajectory {

void to_json(nlohmann::json& j, const RoleAnnotation& r) {
  j = {{"subgoal", r.subgoal}, {"judgment", r.judgment}, {"diagnostic", r.diagnostic}, {"notes", r.notes}};
}

void from_json(const nlohmann::json& j, RoleAnnotation& r) {
  r.subgoal = j.at("subgoal").get<std::string>();
  r.judgment = j.at("judgment").get<std::string>();
  r.diagnostic = j.at("diagnostic").get<std::string>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const Step& s) {
  j = {{"index", s.index}, {"observation", s.observation}, {"action", s.action},
       {"predicate_evals", s.predicate_evals}};
  if (s.thought) j["thought"] = *s.thought;
  if (s.conclusion) j["conclusion"] = *s.conclusion;
  if (s.generation) j["token_ids"] = *s.generation;
  if (s.error) j["error"] = *s.error;
  if (s.roles) j["roles"] = *s.roles;
}

void from_json(const nlohmann::json& j, Step& s) {
  s = Step{};
  s.index = j.at("index").get<std::size_t>();
  s.observation = j.at("observation").get<virtualenv::Observation>();
  s.action = j.at("action").get<virtualenv::Action>();
  s.predicate_evals = j.at("predicate_evals").get<PredicateEvals>();
  if (j.contains("thought")) s.thought = j.at("thought").get<std::string>();
  if (j.contains("conclusion")) s.conclusion = j.at("conclusion").get<std::string>();
  if (j.contains("token_ids")) s.generation = j.at("token_ids").get<transport::GenerationRecord>();
  if (j.contains("error")) s.error = j.at("error").get<std::string>();
  if (j.contains("roles")) s.roles = j.at("roles").get<RoleAnnotation>();
}

}  // namespace flywheel::trajectory
