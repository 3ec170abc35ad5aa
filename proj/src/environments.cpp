// Reference environments: doc-editor, list-browser, form-flow.

#include <algorithm>
#include <charconv>
#include <sstream>

#include "environments.hpp"
#include "flywheel/error.hpp"

namespace flywheel::virtualenv {

namespace {

const char* const kEditable[] = {"text_field", "text_area"};

bool is_editable(const Element& e) {
  return std::find(std::begin(kEditable), std::end(kEditable), e.kind) != std::end(kEditable);
}

void focus(EnvState& state, const std::string& id) {
  for (auto& [eid, e] : state.ui_tree) e.focused = (eid == id);
}

void unfocus_all(EnvState& state) {
  for (auto& [eid, e] : state.ui_tree) e.focused = false;
}

Element* focused_element(EnvState& state) {
  for (auto& [eid, e] : state.ui_tree)
    if (e.focused) return &e;
  return nullptr;
}

std::string focused_id(const EnvState& state) {
  for (const auto& [eid, e] : state.ui_tree)
    if (e.focused) return eid;
  return {};
}

int jitter(const ScenarioSpec& scenario) { return static_cast<int>(scenario.seed % 5); }

Element make(std::string kind, std::string text, Bounds bounds, std::string parent = {},
             std::string value = {}) {
  Element e;
  e.kind = std::move(kind);
  e.text = std::move(text);
  e.bounds = bounds;
  e.parent = std::move(parent);
  e.value = std::move(value);
  return e;
}

// Resolves the action's target to a visible element id.
std::optional<std::string> resolve_target(const EnvState& state, const Action& action,
                                          std::string& error) {
  if (!action.target) return std::nullopt;
  if (const auto* id = action.target_id()) {
    const auto it = state.ui_tree.find(*id);
    if (it == state.ui_tree.end()) {
      error = "no element '" + *id + "'";
      return std::nullopt;
    }
    if (!it->second.visible) {
      error = "element '" + *id + "' is not visible";
      return std::nullopt;
    }
    return *id;
  }
  // Coordinate hit test: the smallest visible element containing the point.
  const auto& p = std::get<Point>(*action.target);
  std::optional<std::string> best;
  long best_area = 0;
  for (const auto& [id, e] : state.ui_tree) {
    if (!e.visible || !e.bounds.contains(p.x, p.y)) continue;
    const long area = static_cast<long>(e.bounds.width) * e.bounds.height;
    if (!best || area < best_area) {
      best = id;
      best_area = area;
    }
  }
  if (!best) error = "no element at (" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
  return best;
}

// Shared handling for typing into the target or the focused editable field.
std::optional<std::string> type_text(EnvState& state, const Action& action, std::string* edited_id) {
  std::string error;
  Element* field = nullptr;
  if (action.target) {
    const auto id = resolve_target(state, action, error);
    if (!id) return error;
    field = &state.ui_tree.at(*id);
    if (!is_editable(*field)) return "element '" + *id + "' does not accept text";
    focus(state, *id);
    if (edited_id) *edited_id = *id;
  } else {
    field = focused_element(state);
    if (field == nullptr || !is_editable(*field)) return std::string("no focused input field");
    if (edited_id) *edited_id = focused_id(state);
  }
  field->value += *action.text;
  return std::nullopt;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

CheckpointPredicate element_predicate(std::string id, std::string element, Attribute attr, StringOp op,
                                      std::string operand) {
  return {std::move(id), {ElementTest{std::move(element), attr, op, std::move(operand)}}};
}

CheckpointPredicate counter_predicate(std::string id, std::string counter, Comparison cmp,
                                      std::int64_t value) {
  return {std::move(id), {CounterTest{std::move(counter), cmp, value}}};
}

// ---- doc-editor ------------------------------------------------------------

class DocEditor final : public EnvironmentModel {
 public:
  std::string kind() const override { return "doc-editor"; }
  DeviceFamily default_device() const override { return DeviceFamily::kDesktop; }

  EnvState initial_state(const ScenarioSpec& scenario) const override {
    const int dx = jitter(scenario);
    EnvState s;
    s.app_id = kind();
    s.device = scenario.device.value_or(default_device());
    s.ui_tree["toolbar"] = make("container", "", {0, 0, 800, 40});
    s.ui_tree["save_button"] = make("button", "Save", {700 + dx, 5, 80, 30}, "toolbar");
    s.ui_tree["title_field"] = make("text_field", "Title", {10 + dx, 50, 780, 30});
    s.ui_tree["note_field"] = make("text_area", "Note", {10 + dx, 90, 780, 400}, "", scenario.initial_content);
    s.ui_tree["status_label"] = make("label", "New document", {10 + dx, 500, 300, 20});
    s.counters = {{"saved", 0}, {"scroll", 0}, {"edits", 0}};
    return s;
  }

  std::optional<std::string> apply(EnvState& s, const Action& a) const override {
    std::string error;
    switch (a.kind) {
      case ActionKind::kClick: {
        const auto id = resolve_target(s, a, error);
        if (!id) return error;
        if (*id == "save_button") {
          save(s);
        } else if (is_editable(s.ui_tree.at(*id))) {
          focus(s, *id);
        }
        return std::nullopt;
      }
      case ActionKind::kType: {
        if (auto err = type_text(s, a, nullptr)) return err;
        edited(s);
        return std::nullopt;
      }
      case ActionKind::kScroll: {
        const std::string dir = a.text.value_or("down");
        if (dir != "down" && dir != "up") return "unknown scroll direction '" + dir + "'";
        auto& offset = s.counters["scroll"];
        offset = std::max<std::int64_t>(0, offset + (dir == "down" ? 1 : -1));
        return std::nullopt;
      }
      case ActionKind::kDrag:
        return std::string("drag is not part of the doc-editor action space");
      case ActionKind::kKey: return key(s, *a.text);
      case ActionKind::kToolCall: return tool(s, a);
      case ActionKind::kTerminate: return std::nullopt;
    }
    return std::string("unsupported action");
  }

  std::vector<CheckpointPredicate> builtin_predicates() const override {
    return {
        element_predicate("doc_contains_milk", "note_field", Attribute::kValue, StringOp::kContains, "milk"),
        element_predicate("note_focused", "note_field", Attribute::kFocused, StringOp::kEq, "true"),
        counter_predicate("doc_saved", "saved", Comparison::kEq, 1),
        element_predicate("doc_nonempty", "note_field", Attribute::kValue, StringOp::kNe, ""),
    };
  }

 private:
  static void save(EnvState& s) {
    s.counters["saved"] = 1;
    s.ui_tree.at("status_label").text = "Saved";
    s.toast = "Document saved";
  }

  static void edited(EnvState& s) {
    s.counters["saved"] = 0;
    ++s.counters["edits"];
    s.ui_tree.at("status_label").text = "Edited";
  }

  static std::optional<std::string> key(EnvState& s, const std::string& name) {
    if (name == "Wait") return std::nullopt;
    if (name == "Escape") {
      unfocus_all(s);
      return std::nullopt;
    }
    if (name == "Ctrl+S") {
      save(s);
      return std::nullopt;
    }
    Element* field = focused_element(s);
    if (field == nullptr || !is_editable(*field)) return "key '" + name + "' needs a focused input field";
    if (name == "Enter") {
      field->value += "\n";
    } else if (name == "Backspace") {
      if (field->value.empty()) return std::nullopt;
      field->value.pop_back();
    } else if (name == "Ctrl+C") {
      s.clipboard = field->value;
      s.toast = "Copied";
      return std::nullopt;
    } else if (name == "Ctrl+V") {
      field->value += s.clipboard;
    } else {
      return "unknown key '" + name + "'";
    }
    edited(s);
    return std::nullopt;
  }

  static std::optional<std::string> tool(EnvState& s, const Action& a) {
    auto& note = s.ui_tree.at("note_field").value;
    if (a.tool_name == "word_count") {
      std::istringstream in(note);
      std::size_t words = 0;
      for (std::string w; in >> w;) ++words;
      s.toast = std::to_string(words) + " words";
      return std::nullopt;
    }
    if (a.tool_name == "replace") {
      const auto find = a.arguments.find("find");
      const auto with = a.arguments.find("with");
      if (find == a.arguments.end() || with == a.arguments.end() || find->second.empty())
        return std::string("replace needs 'find' and 'with' arguments");
      std::size_t count = 0;
      for (std::size_t pos = 0; (pos = note.find(find->second, pos)) != std::string::npos; ++count) {
        note.replace(pos, find->second.size(), with->second);
        pos += with->second.size();
      }
      s.toast = std::to_string(count) + " replaced";
      if (count > 0) edited(s);
      return std::nullopt;
    }
    if (a.tool_name == "save") {
      save(s);
      return std::nullopt;
    }
    return "unknown tool '" + a.tool_name + "'";
  }
};

// ---- list-browser ----------------------------------------------------------

constexpr int kViewportRows = 5;

class ListBrowser final : public EnvironmentModel {
 public:
  std::string kind() const override { return "list-browser"; }
  DeviceFamily default_device() const override { return DeviceFamily::kMobile; }

  EnvState initial_state(const ScenarioSpec& scenario) const override {
    std::vector<std::string> names;
    std::istringstream in(scenario.initial_content);
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) names.push_back(line);
    if (names.empty())
      names = {"Alice", "Bob", "Carol", "Dave", "Erin", "Frank",
               "Grace", "Heidi", "Ivan", "Judy", "Mallory", "Niaj"};

    const int dx = jitter(scenario);
    EnvState s;
    s.app_id = kind();
    s.device = scenario.device.value_or(default_device());
    s.ui_tree["search_field"] = make("text_field", "Search", {10 + dx, 10, 300, 30});
    s.ui_tree["list"] = make("container", "", {0, 50, 400, 50 * kViewportRows + 10});
    for (std::size_t i = 0; i < names.size(); ++i)
      s.ui_tree[item_id(i)] = make("list_item", names[i], {10 + dx, 0, 380, 45}, "list");
    s.ui_tree["end_marker"] = make("label", "End of list", {10 + dx, 60 + 50 * kViewportRows, 200, 20});
    s.ui_tree["detail_panel"] = make("label", "", {420 + dx, 50, 300, 200});
    s.counters = {{"offset", 0}, {"selected", -1}, {"moves", 0}, {"items", static_cast<std::int64_t>(names.size())}};
    layout(s);
    return s;
  }

  std::optional<std::string> apply(EnvState& s, const Action& a) const override {
    std::string error;
    switch (a.kind) {
      case ActionKind::kClick: {
        const auto id = resolve_target(s, a, error);
        if (!id) return error;
        const auto& e = s.ui_tree.at(*id);
        if (e.kind == "list_item") {
          s.counters["selected"] = index_of(*id);
          unfocus_all(s);
        } else if (is_editable(e)) {
          focus(s, *id);
        }
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kType: return type_text(s, a, nullptr);
      case ActionKind::kScroll: {
        const std::string dir = a.text.value_or("down");
        if (dir != "down" && dir != "up") return "unknown scroll direction '" + dir + "'";
        auto& offset = s.counters["offset"];
        offset = std::clamp<std::int64_t>(offset + (dir == "down" ? 1 : -1), 0, max_offset(s));
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kDrag: {
        const auto id = resolve_target(s, a, error);
        if (!id) return error;
        if (s.ui_tree.at(*id).kind != "list_item") return "only list items can be dragged";
        const auto dest = s.ui_tree.find(*a.text);
        if (dest == s.ui_tree.end() || dest->second.kind != "list_item")
          return "drag destination '" + *a.text + "' is not a list item";
        move_item(s, index_of(*id), index_of(*a.text));
        ++s.counters["moves"];
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kKey: {
        const std::string& name = *a.text;
        if (name == "Wait") return std::nullopt;
        if (name == "Escape") {
          s.counters["selected"] = -1;
        } else if (name == "Home") {
          s.counters["offset"] = 0;
        } else if (name == "End") {
          s.counters["offset"] = max_offset(s);
        } else {
          return "unknown key '" + name + "'";
        }
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kToolCall: {
        if (a.tool_name != "search") return "unknown tool '" + a.tool_name + "'";
        const auto q = a.arguments.find("query");
        if (q == a.arguments.end()) return std::string("search needs a 'query' argument");
        std::size_t matches = 0;
        for (const auto& [id, e] : s.ui_tree)
          if (e.kind == "list_item" && e.text.find(q->second) != std::string::npos) ++matches;
        s.toast = std::to_string(matches) + " matches for '" + q->second + "'";
        return std::nullopt;
      }
      case ActionKind::kTerminate: return std::nullopt;
    }
    return std::string("unsupported action");
  }

  std::vector<CheckpointPredicate> builtin_predicates() const override {
    return {
        element_predicate("list_at_bottom", "end_marker", Attribute::kVisible, StringOp::kEq, "true"),
        counter_predicate("item_selected", "selected", Comparison::kGe, 0),
        counter_predicate("list_reordered", "moves", Comparison::kGe, 1),
    };
  }

 private:
  static std::string item_id(std::size_t i) {
    std::string digits = std::to_string(i);
    if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
    return "item_" + digits;
  }

  static std::int64_t index_of(const std::string& id) { return *parse_int(id.substr(5)); }

  static std::int64_t max_offset(const EnvState& s) {
    return std::max<std::int64_t>(0, s.counters.at("items") - kViewportRows);
  }

  static void move_item(EnvState& s, std::int64_t from, std::int64_t to) {
    const auto n = s.counters.at("items");
    std::vector<std::string> names;
    for (std::int64_t i = 0; i < n; ++i) names.push_back(s.ui_tree.at(item_id(i)).text);
    const std::string moved = names[from];
    names.erase(names.begin() + from);
    names.insert(names.begin() + to, moved);
    for (std::int64_t i = 0; i < n; ++i) s.ui_tree.at(item_id(i)).text = names[i];
  }

  static void layout(EnvState& s) {
    const auto offset = s.counters.at("offset");
    const auto n = s.counters.at("items");
    for (std::int64_t i = 0; i < n; ++i) {
      auto& e = s.ui_tree.at(item_id(i));
      e.visible = i >= offset && i < offset + kViewportRows;
      e.bounds.y = e.visible ? 60 + 50 * static_cast<int>(i - offset) : 0;
    }
    s.ui_tree.at("end_marker").visible = offset + kViewportRows >= n;
    const auto selected = s.counters.at("selected");
    auto& detail = s.ui_tree.at("detail_panel");
    detail.visible = selected >= 0;
    detail.text = selected >= 0 ? s.ui_tree.at(item_id(selected)).text : "";
  }
};

// ---- form-flow -------------------------------------------------------------

class FormFlow final : public EnvironmentModel {
 public:
  std::string kind() const override { return "form-flow"; }
  DeviceFamily default_device() const override { return DeviceFamily::kWeb; }

  EnvState initial_state(const ScenarioSpec& scenario) const override {
    const int dx = jitter(scenario);
    EnvState s;
    s.app_id = kind();
    s.device = scenario.device.value_or(default_device());
    const std::string title = scenario.initial_content.empty() ? "Registration" : scenario.initial_content;
    s.ui_tree["form_title"] = make("label", title, {10 + dx, 10, 400, 30});
    s.ui_tree["name_field"] = make("text_field", "Name", {10 + dx, 60, 300, 30});
    s.ui_tree["email_field"] = make("text_field", "Email", {10 + dx, 60, 300, 30});
    s.ui_tree["volume_slider"] = make("slider", "Volume", {10 + dx, 110, 300, 20}, "", "50");
    s.ui_tree["summary_label"] = make("label", "", {10 + dx, 60, 400, 60});
    s.ui_tree["back_button"] = make("button", "Back", {10 + dx, 200, 80, 30});
    s.ui_tree["next_button"] = make("button", "Next", {220 + dx, 200, 80, 30});
    s.ui_tree["submit_button"] = make("button", "Submit", {220 + dx, 200, 80, 30});
    s.counters = {{"screen", 0}, {"submitted", 0}};
    layout(s);
    return s;
  }

  std::optional<std::string> apply(EnvState& s, const Action& a) const override {
    std::string error;
    switch (a.kind) {
      case ActionKind::kClick: {
        const auto id = resolve_target(s, a, error);
        if (!id) return error;
        auto& screen = s.counters["screen"];
        if (*id == "next_button") {
          if (screen == 0 && s.ui_tree.at("name_field").value.empty()) {
            s.toast = "Name is required";
          } else if (screen == 1 && s.ui_tree.at("email_field").value.find('@') == std::string::npos) {
            s.toast = "Valid email required";
          } else {
            ++screen;
            unfocus_all(s);
          }
        } else if (*id == "back_button") {
          --screen;
          unfocus_all(s);
        } else if (*id == "submit_button") {
          if (s.counters["submitted"] == 1) {
            s.toast = "Already submitted";
          } else {
            s.counters["submitted"] = 1;
            s.toast = "Form submitted";
          }
        } else if (is_editable(s.ui_tree.at(*id))) {
          focus(s, *id);
        }
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kType: {
        auto err = type_text(s, a, nullptr);
        if (!err) layout(s);
        return err;
      }
      case ActionKind::kScroll: return std::nullopt;
      case ActionKind::kDrag: {
        const auto id = resolve_target(s, a, error);
        if (!id) return error;
        if (s.ui_tree.at(*id).kind != "slider") return "only sliders can be dragged";
        const auto v = parse_int(*a.text);
        if (!v || *v < 0 || *v > 100) return "slider position must be an integer in [0, 100]";
        s.ui_tree.at(*id).value = std::to_string(*v);
        layout(s);
        return std::nullopt;
      }
      case ActionKind::kKey: {
        const std::string& name = *a.text;
        if (name == "Wait") return std::nullopt;
        if (name == "Escape") {
          unfocus_all(s);
          return std::nullopt;
        }
        if (name == "Backspace") {
          Element* field = focused_element(s);
          if (field == nullptr || !is_editable(*field)) return std::string("no focused input field");
          if (!field->value.empty()) field->value.pop_back();
          layout(s);
          return std::nullopt;
        }
        return "unknown key '" + name + "'";
      }
      case ActionKind::kToolCall: {
        if (a.tool_name != "validate") return "unknown tool '" + a.tool_name + "'";
        std::string missing;
        if (s.ui_tree.at("name_field").value.empty()) missing += " name";
        if (s.ui_tree.at("email_field").value.find('@') == std::string::npos) missing += " email";
        s.toast = missing.empty() ? "All fields valid" : "Missing:" + missing;
        return std::nullopt;
      }
      case ActionKind::kTerminate: return std::nullopt;
    }
    return std::string("unsupported action");
  }

  std::vector<CheckpointPredicate> builtin_predicates() const override {
    return {
        element_predicate("form_name_filled", "name_field", Attribute::kValue, StringOp::kNe, ""),
        counter_predicate("form_on_email", "screen", Comparison::kGe, 1),
        counter_predicate("form_submitted", "submitted", Comparison::kEq, 1),
    };
  }

 private:
  static void layout(EnvState& s) {
    const auto screen = s.counters.at("screen");
    s.ui_tree.at("name_field").visible = screen == 0;
    s.ui_tree.at("email_field").visible = screen == 1;
    s.ui_tree.at("volume_slider").visible = screen == 1;
    s.ui_tree.at("summary_label").visible = screen == 2;
    s.ui_tree.at("back_button").visible = screen > 0;
    s.ui_tree.at("next_button").visible = screen < 2;
    s.ui_tree.at("submit_button").visible = screen == 2;
    s.ui_tree.at("summary_label").text = "Name: " + s.ui_tree.at("name_field").value +
                                         "; Email: " + s.ui_tree.at("email_field").value +
                                         "; Volume: " + s.ui_tree.at("volume_slider").value;
  }
};

}  // namespace

std::shared_ptr<const EnvironmentModel> make_doc_editor() { return std::make_shared<DocEditor>(); }
std::shared_ptr<const EnvironmentModel> make_list_browser() { return std::make_shared<ListBrowser>(); }
std::shared_ptr<const EnvironmentModel> make_form_flow() { return std::make_shared<FormFlow>(); }

}  // namespace flywheel::virtualenv
