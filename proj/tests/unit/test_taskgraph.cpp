#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "flywheel/taskgraph.hpp"
#include "test_support.hpp"

namespace flywheel::taskgraph {
namespace {

using testing::data_path;
using testing::read_text;

SubtaskNode node(const std::string& id, const std::string& text, bool start, bool terminal,
                 const std::string& checkpoint = "") {
  return {id, text, start, terminal, checkpoint.empty() ? id + "_done" : checkpoint};
}

TaskDag chain(int n) {
  std::vector<SubtaskNode> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int i = 0; i < n; ++i) {
    nodes.push_back(node("v" + std::to_string(i), "step " + std::to_string(i), i == 0, i == n - 1));
    if (i > 0) edges.emplace_back("v" + std::to_string(i - 1), "v" + std::to_string(i));
  }
  return TaskDag(nodes, edges);
}

TaskDag diamond() {
  return TaskDag({node("s", "start", true, false), node("a", "left", false, false), node("b", "right", false, false),
                  node("t", "end", false, true)},
                 {{"s", "a"}, {"s", "b"}, {"a", "t"}, {"b", "t"}});
}

// Random DAG over v0..v{n-1}; edges only go from lower to higher index.
TaskDag random_dag(Rng& rng, int n, double edge_p) {
  std::vector<SubtaskNode> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int i = 0; i < n; ++i) nodes.push_back(node("v" + std::to_string(i), "do " + std::to_string(i), false, false));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(edge_p)) edges.emplace_back("v" + std::to_string(i), "v" + std::to_string(j));
  for (auto& nd : nodes) {
    nd.is_start = rng.bernoulli(0.3);
    nd.is_terminal = rng.bernoulli(0.3);
  }
  nodes.front().is_start = true;
  nodes.back().is_terminal = true;
  return TaskDag(nodes, edges);
}

// Independent reachability oracle: plain recursive DFS over the edge list.
bool reaches_terminal(const TaskDag& dag, const NodeId& from, std::set<NodeId>& seen) {
  if (dag.node(from).is_terminal) return true;
  if (!seen.insert(from).second) return false;
  for (const auto& [a, b] : dag.edges())
    if (a == from && reaches_terminal(dag, b, seen)) return true;
  return false;
}

TEST(ValidateDag, SingleStartTerminalNodeIsOk) {
  const TaskDag dag({node("only", "do it", true, true)}, {});
  EXPECT_TRUE(validate_dag(dag).ok());
}

TEST(ValidateDag, TwoCycleIsReported) {
  const TaskDag dag({node("a", "x", true, false), node("b", "y", false, true)}, {{"a", "b"}, {"b", "a"}});
  const auto report = validate_dag(dag);
  EXPECT_TRUE(report.has(ViolationKind::kCycle));
}

TEST(ValidateDag, StartWithoutPathToTerminal) {
  const TaskDag dag({node("s1", "x", true, false), node("s2", "y", true, false), node("t", "z", false, true)},
                    {{"s2", "t"}});
  const auto report = validate_dag(dag);
  ASSERT_TRUE(report.has(ViolationKind::kUnreachableTerminal));
  const auto it = std::find_if(report.violations.begin(), report.violations.end(),
                               [](const Violation& v) { return v.kind == ViolationKind::kUnreachableTerminal; });
  EXPECT_EQ(it->subject, "s1");
}

TEST(ValidateDag, StructuralViolations) {
  EXPECT_TRUE(validate_dag(TaskDag({node("a", "x", true, true)}, {{"a", "ghost"}})).has(ViolationKind::kDanglingEdge));
  EXPECT_TRUE(validate_dag(TaskDag({node("a", "x", false, true)}, {})).has(ViolationKind::kEmptyStart));
  EXPECT_TRUE(validate_dag(TaskDag({node("a", "x", true, false)}, {})).has(ViolationKind::kEmptyTerminal));
  EXPECT_TRUE(validate_dag(TaskDag({node("a", "{x} and {x}", true, true)}, {})).has(ViolationKind::kDuplicateSlot));
  EXPECT_TRUE(
      validate_dag(TaskDag({node("a", "x", true, true), node("a", "y", true, true)}, {})).has(ViolationKind::kDuplicateNode));
}

TEST(ValidateDag, CheckpointsMustResolve) {
  const TaskDag dag({node("a", "x", true, true, "known")}, {});
  EXPECT_TRUE(validate_dag(dag, {"known"}).ok());
  EXPECT_TRUE(validate_dag(dag, {"other"}).has(ViolationKind::kUnknownCheckpoint));
}

TEST(ValidateDag, ReachabilityAgreesWithDfsOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const TaskDag dag = random_dag(rng, 2 + static_cast<int>(rng.uniform_index(7)), 0.3);
    bool oracle_ok = true;
    for (const auto& s : dag.start_set()) {
      std::set<NodeId> seen;
      oracle_ok &= reaches_terminal(dag, s, seen);
    }
    EXPECT_EQ(!validate_dag(dag).has(ViolationKind::kUnreachableTerminal), oracle_ok);
  }
}

TEST(SamplePath, LinearChainHasOnePath) {
  const TaskDag dag = chain(3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    EXPECT_EQ(sample_path(dag, rng, 10).nodes, (std::vector<NodeId>{"v0", "v1", "v2"}));
  }
}

TEST(SamplePath, DiamondBranchesAreEquallyLikely) {
  const TaskDag dag = diamond();
  int left = 0;
  const int seeds = 10000;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const auto path = sample_path(dag, rng, 3);
    ASSERT_EQ(path.length(), 3u);
    left += path.nodes[1] == "a";
  }
  EXPECT_NEAR(left / double(seeds), 0.5, 0.02);
  EXPECT_NEAR((seeds - left) / double(seeds), 0.5, 0.02);
}

TEST(SamplePath, LengthBoundWithoutFeasiblePath) {
  Rng rng(1);
  EXPECT_FLYWHEEL_ERROR(sample_path(chain(5), rng, 3), ErrorCode::kNoFeasiblePath);
  EXPECT_EQ(shortest_feasible_length(chain(5)), 5u);
}

TEST(SamplePath, TerminalWithSuccessorsStopsHalfTheTime) {
  // s -> t -> u with t and u terminal: at t, "stop" and "go to u" are equally likely.
  const TaskDag dag({node("s", "a", true, false), node("t", "b", false, true), node("u", "c", false, true)},
                    {{"s", "t"}, {"t", "u"}});
  int stopped = 0;
  for (int seed = 0; seed < 10000; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    stopped += sample_path(dag, rng, 5).length() == 2;
  }
  EXPECT_NEAR(stopped / 10000.0, 0.5, 0.02);
}

TEST(SamplePath, RandomDagsYieldValidBoundedDeterministicPaths) {
  Rng gen(99);
  int sampled = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const TaskDag dag = random_dag(gen, 2 + static_cast<int>(gen.uniform_index(8)), 0.4);
    if (!validate_dag(dag).ok()) continue;
    const std::size_t max_len = 1 + gen.uniform_index(6);
    const auto shortest = shortest_feasible_length(dag);
    const std::uint64_t seed = gen.next_u64();
    Rng a(seed), b(seed);
    if (!shortest || *shortest > max_len) {
      EXPECT_FLYWHEEL_ERROR(sample_path(dag, a, max_len), ErrorCode::kNoFeasiblePath);
      continue;
    }
    const auto path = sample_path(dag, a, max_len);
    EXPECT_EQ(path, sample_path(dag, b, max_len));
    ASSERT_GE(path.length(), 1u);
    EXPECT_LE(path.length(), max_len);
    EXPECT_TRUE(dag.node(path.nodes.front()).is_start);
    EXPECT_TRUE(dag.node(path.nodes.back()).is_terminal);
    for (std::size_t i = 1; i < path.length(); ++i) {
      const std::pair<NodeId, NodeId> edge{path.nodes[i - 1], path.nodes[i]};
      EXPECT_NE(std::find(dag.edges().begin(), dag.edges().end(), edge), dag.edges().end());
    }
    EXPECT_TRUE(is_valid_path(path, dag));
    ++sampled;
  }
  EXPECT_GT(sampled, 50);
}

TEST(IsValidPath, RejectsBrokenPaths) {
  const TaskDag dag = diamond();
  EXPECT_TRUE(is_valid_path({{"s", "a", "t"}}, dag));
  EXPECT_FALSE(is_valid_path({{"s", "t"}}, dag));
  EXPECT_FALSE(is_valid_path({{"a", "t"}}, dag));
  EXPECT_FALSE(is_valid_path({{"s", "a"}}, dag));
  EXPECT_FALSE(is_valid_path({}, dag));
}

TEST(Templates, SlotsAndInstantiation) {
  EXPECT_EQ(template_slots("search for {query} in {app}"), (std::vector<std::string>{"query", "app"}));
  EXPECT_EQ(instantiate("Open {app}", {{"app", "Notes"}}), "Open Notes");
  try {
    instantiate("search for {query}", {{"app", "Notes"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnboundSlot);
    EXPECT_EQ(e.detail(), "query");
  }
}

TaskDag notes_dag() {
  return TaskDag({node("open_app", "Open {app}", true, false), node("search", "search for {query}", false, true)},
                 {{"open_app", "search"}});
}

TEST(ComposeInstruction, DefaultConnective) {
  Rng rng(5);
  const auto task = compose_instruction({{"open_app", "search"}}, notes_dag(), {{"app", "Notes"}, {"query", "milk"}}, rng);
  EXPECT_EQ(task.instruction, "Open Notes, then search for milk");
  EXPECT_EQ(task.checkpoint_ids, (std::vector<std::string>{"open_app_done", "search_done"}));
}

TEST(ComposeInstruction, SingleNodeIsVerbatim) {
  const TaskDag dag({node("only", "Archive the {item}", true, true)}, {});
  Rng rng(5);
  EXPECT_EQ(compose_instruction({{"only"}}, dag, {{"item", "report"}}, rng).instruction, "Archive the report");
}

TEST(ComposeInstruction, MissingBindingNamesSlot) {
  Rng rng(5);
  try {
    compose_instruction({{"open_app", "search"}}, notes_dag(), {{"app", "Notes"}}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnboundSlot);
    EXPECT_EQ(e.detail(), "query");
  }
}

class UpperRewriter final : public Rewriter {
 public:
  std::string rewrite(const std::string& s) const override {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
  }
};

TEST(ComposeInstruction, RewriterAndConnectivesArePluggable) {
  ComposerOptions opts;
  opts.connectives = {" and ", "; then "};
  opts.rewriter = std::make_shared<UpperRewriter>();
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    seen.insert(compose_instruction({{"open_app", "search"}}, notes_dag(), {{"app", "Notes"}, {"query", "milk"}}, rng,
                                    opts)
                    .instruction);
  }
  EXPECT_EQ(seen, (std::set<std::string>{"OPEN NOTES AND SEARCH FOR MILK", "OPEN NOTES; THEN SEARCH FOR MILK"}));
}

TEST(ComposeInstruction, SubInstructionsAppearInPathOrder) {
  Rng gen(3);
  const TaskDag dag = chain(6);
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(gen.next_u64());
    const auto path = sample_path(dag, rng, 6);
    const auto task = compose_instruction(path, dag, {}, rng);
    std::size_t last = 0;
    for (const auto& id : path.nodes) {
      const auto pos = task.instruction.find(dag.node(id).template_text, last);
      ASSERT_NE(pos, std::string::npos);
      EXPECT_GE(pos, last);
      last = pos + 1;
    }
  }
}

TEST(SampleBindings, CoversEverySlotFromPools) {
  const TaskDag dag = notes_dag();
  const EntityPools pools{{"app", {"Notes", "Mail"}}, {"query", {"milk", "eggs", "tea"}}};
  Rng rng(8);
  std::set<std::string> queries;
  for (int i = 0; i < 200; ++i) {
    const auto b = sample_bindings({{"open_app", "search"}}, dag, pools, rng);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_TRUE(b.at("app") == "Notes" || b.at("app") == "Mail");
    queries.insert(b.at("query"));
  }
  EXPECT_EQ(queries.size(), 3u);
}

TEST(DagFile, GoldenDumpIsBitExact) {
  const auto text = read_text(data_path("golden_dag.json"));
  const TaskDag dag = parse_dag(text);
  EXPECT_TRUE(validate_dag(dag).ok());
  EXPECT_EQ(dump_dag(dag), text);
}

TEST(DagFile, RoundTripPreservesStructure) {
  const TaskDag dag = load_dag(data_path("contacts_dag.json"));
  const TaskDag again = parse_dag(dump_dag(dag));
  EXPECT_EQ(again.edges(), dag.edges());
  EXPECT_EQ(again.start_set(), dag.start_set());
  EXPECT_EQ(again.terminal_set(), dag.terminal_set());
  EXPECT_EQ(again.entities, dag.entities);
  ASSERT_EQ(again.nodes().size(), dag.nodes().size());
  for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
    EXPECT_EQ(again.nodes()[i].template_text, dag.nodes()[i].template_text);
    EXPECT_EQ(again.nodes()[i].checkpoint_id, dag.nodes()[i].checkpoint_id);
  }
}

TEST(DagFile, MalformedDocuments) {
  EXPECT_FLYWHEEL_ERROR(parse_dag("{"), ErrorCode::kParseError);
  EXPECT_FLYWHEEL_ERROR(parse_dag(R"({"nodes": []})"), ErrorCode::kParseError);
  EXPECT_FLYWHEEL_ERROR(parse_dag(R"({"nodes": [], "edges": [], "start": ["x"], "terminal": []})"),
                        ErrorCode::kParseError);
  EXPECT_FLYWHEEL_ERROR(load_dag("/nonexistent/dag.json"), ErrorCode::kIoFailure);
}

}  // namespace
}  // namespace flywheel::taskgraph
