#include "flywheel/taskgraph.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "flywheel/error.hpp"
#include "json.hpp"

namespace flywheel::taskgraph {

using nlohmann::json;

std::vector<std::string> template_slots(const std::string& text) {
  std::vector<std::string> slots;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    const std::size_t close = text.find('}', pos + 1);
    if (close == std::string::npos) break;
    slots.push_back(text.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return slots;
}

std::string instantiate(const std::string& text, const EntityBindings& bindings) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('{', pos);
    const std::size_t close = open == std::string::npos ? open : text.find('}', open + 1);
    if (open == std::string::npos || close == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    out.append(text, pos, open - pos);
    const std::string slot = text.substr(open + 1, close - open - 1);
    const auto it = bindings.find(slot);
    if (it == bindings.end()) throw Error(ErrorCode::kUnboundSlot, slot);
    out += it->second;
    pos = close + 1;
  }
  return out;
}

TaskDag::TaskDag(std::vector<SubtaskNode> nodes, std::vector<std::pair<NodeId, NodeId>> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

const SubtaskNode* TaskDag::find(const NodeId& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const SubtaskNode& TaskDag::node(const NodeId& id) const {
  const SubtaskNode* n = find(id);
  if (n == nullptr) throw Error(ErrorCode::kInvalidArgument, "unknown node '" + id + "'");
  return *n;
}

std::vector<NodeId> TaskDag::start_set() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (n.is_start) out.push_back(n.id);
  return out;
}

std::vector<NodeId> TaskDag::terminal_set() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (n.is_terminal) out.push_back(n.id);
  return out;
}

std::vector<NodeId> TaskDag::successors(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const auto& [from, to] : edges_)
    if (from == id) out.push_back(to);
  return out;
}

bool TaskDag::has_edge(const NodeId& from, const NodeId& to) const {
  return std::find(edges_.begin(), edges_.end(), std::make_pair(from, to)) != edges_.end();
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDuplicateNode: return "duplicate node";
    case ViolationKind::kDanglingEdge: return "dangling edge";
    case ViolationKind::kCycle: return "cycle";
    case ViolationKind::kEmptyStart: return "empty start set";
    case ViolationKind::kEmptyTerminal: return "empty terminal set";
    case ViolationKind::kUnreachableTerminal: return "unreachable terminal";
    case ViolationKind::kDuplicateSlot: return "duplicate slot";
    case ViolationKind::kUnknownCheckpoint: return "unknown checkpoint";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

namespace {

// Kahn's algorithm over edges whose endpoints exist. Returns the nodes left
// with positive in-degree, i.e. those on or downstream of a cycle.
std::vector<NodeId> nodes_on_cycles(const TaskDag& dag) {
  std::map<NodeId, int> indegree;
  for (const auto& n : dag.nodes()) indegree[n.id] = 0;
  for (const auto& [from, to] : dag.edges())
    if (indegree.count(from) && indegree.count(to)) ++indegree[to];
  std::vector<NodeId> queue;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) queue.push_back(id);
  while (!queue.empty()) {
    const NodeId id = queue.back();
    queue.pop_back();
    for (const auto& [from, to] : dag.edges()) {
      if (from != id || !indegree.count(to)) continue;
      if (--indegree[to] == 0) queue.push_back(to);
    }
  }
  std::vector<NodeId> stuck;
  for (const auto& [id, deg] : indegree)
    if (deg > 0) stuck.push_back(id);
  return stuck;
}

bool reaches_terminal(const TaskDag& dag, const NodeId& from) {
  std::set<NodeId> seen;
  std::vector<NodeId> stack{from};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    const SubtaskNode* n = dag.find(id);
    if (n == nullptr) continue;
    if (n->is_terminal) return true;
    for (const auto& next : dag.successors(id)) stack.push_back(next);
  }
  return false;
}

}  // namespace

ValidationReport validate_dag(const TaskDag& dag) {
  ValidationReport report;
  auto add = [&report](ViolationKind kind, std::string subject, std::string message) {
    report.violations.push_back({kind, std::move(subject), std::move(message)});
  };

  std::set<NodeId> ids;
  for (const auto& n : dag.nodes()) {
    if (!ids.insert(n.id).second) add(ViolationKind::kDuplicateNode, n.id, "node id declared twice");
    std::set<std::string> slots;
    for (const auto& slot : template_slots(n.template_text))
      if (!slots.insert(slot).second)
        add(ViolationKind::kDuplicateSlot, n.id, "slot '" + slot + "' repeated in template");
  }
  for (const auto& [from, to] : dag.edges()) {
    if (!ids.count(from) || !ids.count(to))
      add(ViolationKind::kDanglingEdge, from + "->" + to, "edge endpoint is not a node");
  }
  if (dag.start_set().empty()) add(ViolationKind::kEmptyStart, "", "no start node");
  if (dag.terminal_set().empty()) add(ViolationKind::kEmptyTerminal, "", "no terminal node");

  const auto cyclic = nodes_on_cycles(dag);
  if (!cyclic.empty()) {
    std::string joined;
    for (const auto& id : cyclic) joined += (joined.empty() ? "" : ",") + id;
    add(ViolationKind::kCycle, joined, "graph has a cycle");
  }
  for (const auto& id : dag.start_set())
    if (!reaches_terminal(dag, id))
      add(ViolationKind::kUnreachableTerminal, id, "start node cannot reach a terminal node");
  return report;
}

ValidationReport validate_dag(const TaskDag& dag, const std::set<std::string>& known_checkpoints) {
  ValidationReport report = validate_dag(dag);
  for (const auto& n : dag.nodes())
    if (!known_checkpoints.count(n.checkpoint_id))
      report.violations.push_back({ViolationKind::kUnknownCheckpoint, n.id,
                                   "checkpoint '" + n.checkpoint_id + "' is not registered"});
  return report;
}

bool is_valid_path(const TaskPath& path, const TaskDag& dag) {
  if (path.nodes.empty()) return false;
  const SubtaskNode* first = dag.find(path.nodes.front());
  const SubtaskNode* last = dag.find(path.nodes.back());
  if (first == nullptr || last == nullptr || !first->is_start || !last->is_terminal) return false;
  for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i)
    if (!dag.has_edge(path.nodes[i], path.nodes[i + 1])) return false;
  return true;
}

std::optional<std::size_t> shortest_feasible_length(const TaskDag& dag) {
  // BFS in node count; the DAG is assumed acyclic but the visited set keeps
  // this finite regardless.
  std::vector<std::pair<NodeId, std::size_t>> frontier;
  std::set<NodeId> seen;
  for (const auto& id : dag.start_set()) frontier.emplace_back(id, 1);
  for (std::size_t i = 0; i < frontier.size(); ++i) {
    const auto [id, len] = frontier[i];
    if (!seen.insert(id).second) continue;
    if (dag.node(id).is_terminal) return len;
    for (const auto& next : dag.successors(id))
      if (dag.find(next) != nullptr) frontier.emplace_back(next, len + 1);
  }
  return std::nullopt;
}

TaskPath sample_path(const TaskDag& dag, Rng& rng, std::size_t max_len,
                     const SamplerOptions& options) {
  const auto shortest = shortest_feasible_length(dag);
  if (max_len == 0 || !shortest || *shortest > max_len)
    throw Error(ErrorCode::kNoFeasiblePath,
                "no start-to-terminal path of length <= " + std::to_string(max_len));
  const auto starts = dag.start_set();
  for (std::size_t attempt = 0; attempt <= options.max_restarts; ++attempt) {
    TaskPath path;
    NodeId current = starts[rng.uniform_index(starts.size())];
    path.nodes.push_back(current);
    while (path.nodes.size() <= max_len) {
      const auto next = dag.successors(current);
      const bool terminal = dag.node(current).is_terminal;
      const std::size_t options_count = next.size() + (terminal ? 1 : 0);
      if (options_count == 0) break;  // dead end
      const std::size_t pick = rng.uniform_index(options_count);
      if (pick == next.size()) return path;  // stop at terminal
      current = next[pick];
      path.nodes.push_back(current);
    }
  }
  throw Error(ErrorCode::kNoFeasiblePath,
              "restart budget exhausted after " + std::to_string(options.max_restarts) + " walks");
}

EntityBindings sample_bindings(const TaskPath& path, const TaskDag& dag, const EntityPools& pools,
                               Rng& rng) {
  EntityBindings bindings;
  for (const auto& id : path.nodes) {
    for (const auto& slot : template_slots(dag.node(id).template_text)) {
      if (bindings.count(slot)) continue;
      const auto it = pools.find(slot);
      if (it == pools.end() || it->second.empty()) throw Error(ErrorCode::kUnboundSlot, slot);
      bindings[slot] = it->second[rng.uniform_index(it->second.size())];
    }
  }
  return bindings;
}

ComposedTask compose_instruction(const TaskPath& path, const TaskDag& dag,
                                 const EntityBindings& bindings, Rng& rng,
                                 const ComposerOptions& options) {
  if (options.connectives.empty())
    throw Error(ErrorCode::kInvalidArgument, "composer needs at least one connective");
  ComposedTask task;
  task.path = path;
  std::string text;
  for (std::size_t i = 0; i < path.nodes.size(); ++i) {
    const SubtaskNode& node = dag.node(path.nodes[i]);
    for (const auto& slot : template_slots(node.template_text)) {
      const auto it = bindings.find(slot);
      if (it == bindings.end()) throw Error(ErrorCode::kUnboundSlot, slot);
      task.entity_bindings[slot] = it->second;
    }
    if (i > 0) text += options.connectives[rng.uniform_index(options.connectives.size())];
    text += instantiate(node.template_text, bindings);
    task.checkpoint_ids.push_back(node.checkpoint_id);
  }
  task.instruction = options.rewriter ? options.rewriter->rewrite(text) : text;
  return task;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::kParseError, std::string("missing key '") + key + "'");
  std::vector<std::string> out;
  for (const auto& item : j.at(key)) out.push_back(item.get<std::string>());
  return out;
}

}  // namespace

TaskDag parse_dag(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw Error(ErrorCode::kParseError, "DAG document must be an object");
    const auto starts = string_list(doc, "start");
    const auto terminals = string_list(doc, "terminal");
    if (!doc.contains("nodes") || !doc.contains("edges"))
      throw Error(ErrorCode::kParseError, "DAG document needs 'nodes' and 'edges'");

    std::vector<SubtaskNode> nodes;
    for (const auto& n : doc.at("nodes")) {
      SubtaskNode node;
      node.id = n.at("id").get<std::string>();
      node.template_text = n.at("template").get<std::string>();
      node.checkpoint_id = n.at("checkpoint").get<std::string>();
      node.is_start = std::find(starts.begin(), starts.end(), node.id) != starts.end();
      node.is_terminal = std::find(terminals.begin(), terminals.end(), node.id) != terminals.end();
      nodes.push_back(std::move(node));
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw Error(ErrorCode::kParseError, "edge must be a [from, to] pair");
      edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    TaskDag dag(std::move(nodes), std::move(edges));
    // start/terminal names that match no node are dropped by the flags above;
    // surface them as a parse error instead of silently shrinking S or T.
    for (const auto& id : starts)
      if (dag.find(id) == nullptr) throw Error(ErrorCode::kParseError, "start node '" + id + "' not declared");
    for (const auto& id : terminals)
      if (dag.find(id) == nullptr)
        throw Error(ErrorCode::kParseError, "terminal node '" + id + "' not declared");
    if (doc.contains("entities"))
      dag.entities = doc.at("entities").get<EntityPools>();
    return dag;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

TaskDag load_dag(const std::string& file_path) {
  std::ifstream in(file_path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + file_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_dag(buffer.str());
}

std::string dump_dag(const TaskDag& dag) {
  json doc;
  doc["nodes"] = json::array();
  for (const auto& n : dag.nodes())
    doc["nodes"].push_back({{"id", n.id}, {"template", n.template_text}, {"checkpoint", n.checkpoint_id}});
  doc["edges"] = json::array();
  for (const auto& [from, to] : dag.edges()) doc["edges"].push_back({from, to});
  doc["start"] = dag.start_set();
  doc["terminal"] = dag.terminal_set();
  if (!dag.entities.empty()) doc["entities"] = dag.entities;
  return doc.dump(2) + "\n";
}

}  // namespace flywheel::taskgraph
