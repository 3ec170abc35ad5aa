#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "flywheel/random.hpp"
#include "flywheel/trajectory.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace flywheel::trajectory {
namespace {

using testing::TempDir;

using fixture::chain_dag;
using fixture::chain_task;
using fixture::from_matrix;
using fixture::random_matrix;

TEST(EvaluateCheckpoints, FullCompletion) {
  const auto r = evaluate_checkpoints(from_matrix({{1, 0, 0}, {1, 1, 0}, {1, 1, 1}}, 3));
  EXPECT_EQ(r.c, (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(r.m, 3u);
}

TEST(EvaluateCheckpoints, FirstSubtaskNeverSatisfied) {
  const auto r = evaluate_checkpoints(from_matrix({{0, 1, 1}, {0, 1, 1}}, 3));
  EXPECT_EQ(r.c, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(r.m, 0u);
}

TEST(EvaluateCheckpoints, MaxOverTime) {
  const auto r = evaluate_checkpoints(from_matrix({{1, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 0, 0}}, 3));
  EXPECT_EQ(r.c[1], 1);
  EXPECT_EQ(r.m, 2u);
}

TEST(EvaluateCheckpoints, MissingPredicateIsNamed) {
  auto traj = from_matrix({{1, 1}}, 2);
  traj.steps[0].predicate_evals.erase("c2");
  try {
    evaluate_checkpoints(traj);
    FAIL() << "expected MissingPredicate";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPredicate);
    EXPECT_NE(std::string(e.what()).find("c2"), std::string::npos);
  }
}

TEST(EvaluateCheckpoints, EmptyTrajectory) {
  const auto r = evaluate_checkpoints(from_matrix({}, 2));
  EXPECT_EQ(r.c, (std::vector<int>{0, 0}));
  EXPECT_EQ(r.m, 0u);
}

TEST(LongestPrefix, Examples) {
  EXPECT_EQ(longest_prefix(std::vector<int>{1, 1, 0, 1}), 2u);
  EXPECT_EQ(longest_prefix(std::vector<int>{}), 0u);
  EXPECT_EQ(longest_prefix(std::vector<int>(7, 1)), 7u);
}

TEST(LongestPrefix, PrefixPropertyOnRandomVectors) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::vector<int> c(rng.uniform_index(10));
    for (auto& v : c) v = rng.bernoulli(0.7) ? 1 : 0;
    const std::size_t m = longest_prefix(c);
    ASSERT_LE(m, c.size());
    for (std::size_t k = 0; k < m; ++k) EXPECT_EQ(c[k], 1);
    if (m < c.size()) {
      EXPECT_EQ(c[m], 0);
    }
  }
}

TEST(TruncateAndRepair, AcceptKeepsWholeTrajectory) {
  const auto traj = from_matrix({{1, 0}, {1, 0}, {0, 0}, {1, 1}, {0, 0}, {0, 0}}, 2);
  const auto c = truncate_and_repair(traj, chain_dag(2));
  const auto* a = std::get_if<Accepted>(&c);
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->trajectory, traj);
  EXPECT_EQ(a->trajectory.steps.size(), 6u);
}

TEST(TruncateAndRepair, CutsAtLastStepOfMthCheckpoint) {
  const auto traj =
      from_matrix({{1, 0, 0}, {0, 0, 0}, {1, 1, 0}, {0, 0, 0}, {0, 1, 0}, {0, 0, 0}}, 3);
  const auto c = truncate_and_repair(traj, chain_dag(3));
  const auto* p = std::get_if<Partial>(&c);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(p->result.report.m, 2u);
  EXPECT_EQ(p->result.t_star, 5u);
  EXPECT_EQ(p->result.truncated.steps.size(), 5u);
  EXPECT_EQ(p->result.repaired_task.path.nodes, (std::vector<taskgraph::NodeId>{"v3"}));
  EXPECT_EQ(p->result.repaired_task.instruction, "do step 3");
  EXPECT_EQ(p->result.repaired_task.checkpoint_ids, (std::vector<std::string>{"c3"}));
}

TEST(TruncateAndRepair, NothingVerifiedIsRejected) {
  const auto c = truncate_and_repair(from_matrix({{0, 1}, {0, 1}}, 2), chain_dag(2));
  EXPECT_TRUE(std::holds_alternative<Rejected>(c));
}

TEST(TruncateAndRepair, AcceptedIsIdempotent) {
  const auto traj = from_matrix({{1, 0, 0}, {1, 1, 1}}, 3);
  const auto first = std::get<Accepted>(truncate_and_repair(traj, chain_dag(3)));
  const auto second = std::get<Accepted>(truncate_and_repair(first.trajectory, chain_dag(3)));
  EXPECT_EQ(second.trajectory, traj);
}

// Soundness, maximality and repair consistency over random matrices.
TEST(TruncateAndRepair, PartialProperties) {
  Rng rng(23);
  int partials = 0;
  for (int i = 0; i < 3000; ++i) {
    const std::size_t K = 2 + rng.uniform_index(5);
    const std::size_t T = 1 + rng.uniform_index(20);
    const auto traj = from_matrix(random_matrix(rng, T, K, 0.3), K);
    const auto c = truncate_and_repair(traj, chain_dag(K));
    const auto* p = std::get_if<Partial>(&c);
    if (p == nullptr) continue;
    ++partials;
    const auto& r = p->result;
    const std::size_t m = r.report.m;

    // t_star follows phi_m alone, so an earlier checkpoint first reached after
    // t_star is missing from the prefix. That is the only way soundness fails.
    const auto re = evaluate_checkpoints(r.truncated);
    for (std::size_t k = 0; k < m; ++k) {
      std::size_t first = 0;
      for (std::size_t t = 0; t < traj.steps.size() && first == 0; ++t)
        if (traj.steps[t].predicate_evals.at(traj.task.checkpoint_ids[k]) == 1) first = t + 1;
      EXPECT_EQ(re.c[k] == 1, first <= r.t_star);
    }

    const std::string& last = traj.task.checkpoint_ids[m - 1];
    for (std::size_t t = r.t_star; t < traj.steps.size(); ++t) EXPECT_EQ(traj.steps[t].predicate_evals.at(last), 0);
    EXPECT_EQ(traj.steps[r.t_star - 1].predicate_evals.at(last), 1);

    ASSERT_EQ(r.repaired_task.path.nodes.size(), K - m);
    EXPECT_TRUE(std::equal(r.repaired_task.path.nodes.begin(), r.repaired_task.path.nodes.end(),
                           traj.task.path.nodes.end() - static_cast<std::ptrdiff_t>(K - m)));
    EXPECT_EQ(r.truncated.task, traj.task);
  }
  EXPECT_GT(partials, 100);
}

Trajectory small_trajectory(std::size_t steps) {
  auto traj = from_matrix(std::vector<std::vector<int>>(steps, {1, 1}), 2);
  traj.device = DeviceFamily::kWeb;
  traj.policy_snapshot = 42;
  traj.stop_reason = StopReason::kMaxSteps;
  if (!traj.steps.empty()) {
    traj.steps[0].thought = "look first";
    traj.steps[0].conclusion = "typed the name";
    traj.steps[0].error = "no element 'x'";
    traj.steps[0].roles = RoleAnnotation{"fill the form", "FAILURE", "no effect", {"n1: a"}};
    traj.steps[0].observation.app_id = "form-flow";
    traj.steps[0].observation.elements.push_back({"name_field", "text_field", "Name", "Ann", {1, 2, 3, 4}, true});
  }
  return traj;
}

TEST(Dataset, RoundTripThreeAcceptedRecords) {
  TempDir dir("dataset");
  std::vector<DatasetRecord> records;
  for (std::size_t n : {1u, 2u, 3u}) records.push_back(to_record(Accepted{small_trajectory(n), {}}));
  EXPECT_EQ(write_dataset(records, dir.file("d.jsonl")), 3u);
  EXPECT_EQ(read_dataset(dir.file("d.jsonl")), records);

  std::ifstream in(dir.file("d.jsonl"));
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 3u);
}

TEST(Dataset, EmptyListWritesEmptyFile) {
  TempDir dir("dataset");
  EXPECT_EQ(write_dataset({}, dir.file("e.jsonl")), 0u);
  EXPECT_TRUE(testing::read_text(dir.file("e.jsonl")).empty());
  EXPECT_TRUE(read_dataset(dir.file("e.jsonl")).empty());
}

TEST(Dataset, PartialRecordCarriesBothInstructions) {
  const auto traj =
      from_matrix({{1, 0, 0}, {0, 0, 0}, {1, 1, 0}, {0, 0, 0}, {0, 1, 0}, {0, 0, 0}}, 3);
  const auto record = to_record(std::get<Partial>(truncate_and_repair(traj, chain_dag(3))));
  const auto j = nlohmann::json::parse(encode_record(record));
  EXPECT_EQ(j.at("classification"), "partial");
  EXPECT_EQ(j.at("task").at("instruction"), "do step 3");
  EXPECT_EQ(j.at("original_task").at("instruction"), "do all 3 steps");
  EXPECT_EQ(j.at("t_star"), 5);
  EXPECT_EQ(j.at("steps").size(), 5u);
  EXPECT_EQ(decode_record(encode_record(record)), record);
}

TEST(Dataset, UnwritableAndMalformed) {
  EXPECT_FLYWHEEL_ERROR(write_dataset({}, "/nonexistent-dir/x.jsonl"), ErrorCode::kIoFailure);
  EXPECT_FLYWHEEL_ERROR(read_dataset("/nonexistent-dir/x.jsonl"), ErrorCode::kIoFailure);
  EXPECT_FLYWHEEL_ERROR(decode_record("{not json"), ErrorCode::kParseError);
  EXPECT_FLYWHEEL_ERROR(decode_record(R"({"v": 99})"), ErrorCode::kParseError);
}

}  // namespace
}  // namespace flywheel::trajectory
