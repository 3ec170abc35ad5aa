#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flywheel/random.hpp"

namespace flywheel::taskgraph {

using NodeId = std::string;
using EntityBindings = std::map<std::string, std::string>;
using EntityPools = std::map<std::string, std::vector<std::string>>;

// Names of the `{slot}` placeholders in a template, in order of appearance.
// Repeated names are reported repeatedly.
std::vector<std::string> template_slots(const std::string& text);

// Replaces every `{slot}` with its binding. Throws Error(kUnboundSlot).
std::string instantiate(const std::string& text, const EntityBindings& bindings);

struct SubtaskNode {
  NodeId id;
  std::string template_text;
  bool is_start = false;
  bool is_terminal = false;
  std::string checkpoint_id;
};

// Human-authored subtask graph. Nodes are kept in insertion order; start and
// terminal membership lives on the node flags.
class TaskDag {
 public:
  TaskDag() = default;
  TaskDag(std::vector<SubtaskNode> nodes, std::vector<std::pair<NodeId, NodeId>> edges);

  const std::vector<SubtaskNode>& nodes() const { return nodes_; }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }

  const SubtaskNode* find(const NodeId& id) const;
  const SubtaskNode& node(const NodeId& id) const;  // throws kInvalidArgument

  std::vector<NodeId> start_set() const;
  std::vector<NodeId> terminal_set() const;

  // Out-neighbours in edge declaration order.
  std::vector<NodeId> successors(const NodeId& id) const;
  bool has_edge(const NodeId& from, const NodeId& to) const;

  // Entity pools shipped alongside the DAG (optional `entities` key).
  EntityPools entities;

 private:
  std::vector<SubtaskNode> nodes_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::map<NodeId, std::size_t> index_;
};

enum class ViolationKind {
  kDuplicateNode,
  kDanglingEdge,
  kCycle,
  kEmptyStart,
  kEmptyTerminal,
  kUnreachableTerminal,
  kDuplicateSlot,
  kUnknownCheckpoint,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string subject;  // offending node id or "from->to"
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

ValidationReport validate_dag(const TaskDag& dag);
// Additionally checks that every node's checkpoint resolves to exactly one of
// `known_checkpoints`.
ValidationReport validate_dag(const TaskDag& dag, const std::set<std::string>& known_checkpoints);

struct TaskPath {
  std::vector<NodeId> nodes;
  std::size_t length() const { return nodes.size(); }
  bool operator==(const TaskPath&) const = default;
};

// Edge membership plus S/T endpoints.
bool is_valid_path(const TaskPath& path, const TaskDag& dag);

struct SamplerOptions {
  std::size_t max_restarts = 10000;
};

// Uniform start node, then a uniform choice among outgoing edges at each step.
// A terminal node with outgoing edges treats "stop here" as one more option.
// Walks that dead-end or exceed max_len restart from scratch.
// Throws Error(kNoFeasiblePath).
TaskPath sample_path(const TaskDag& dag, Rng& rng, std::size_t max_len,
                     const SamplerOptions& options = {});

// Shortest S->T path length, if any.
std::optional<std::size_t> shortest_feasible_length(const TaskDag& dag);

EntityBindings sample_bindings(const TaskPath& path, const TaskDag& dag,
                               const EntityPools& pools, Rng& rng);

struct ComposedTask {
  TaskPath path;
  EntityBindings entity_bindings;
  std::string instruction;
  // checkpoint ids of the path nodes, in path order
  std::vector<std::string> checkpoint_ids;

  bool operator==(const ComposedTask&) const = default;
};

class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual std::string rewrite(const std::string& instruction) const = 0;
};

class IdentityRewriter final : public Rewriter {
 public:
  std::string rewrite(const std::string& instruction) const override { return instruction; }
};

struct ComposerOptions {
  // One connective is drawn uniformly per join.
  std::vector<std::string> connectives = {", then "};
  std::shared_ptr<const Rewriter> rewriter = std::make_shared<IdentityRewriter>();
};

ComposedTask compose_instruction(const TaskPath& path, const TaskDag& dag,
                                 const EntityBindings& bindings, Rng& rng,
                                 const ComposerOptions& options = {});

// Throws Error(kParseError) on malformed documents. The DAG is not validated.
TaskDag parse_dag(const std::string& text);
TaskDag load_dag(const std::string& file_path);  // kIoFailure / kParseError
std::string dump_dag(const TaskDag& dag);

}  // namespace flywheel::taskgraph
