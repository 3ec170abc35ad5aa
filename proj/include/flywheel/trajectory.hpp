#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/device.hpp"
#include "flywheel/env_types.hpp"
#include "flywheel/taskgraph.hpp"
#include "flywheel/transport.hpp"

namespace flywheel::trajectory {

using taskgraph::ComposedTask;
using virtualenv::Action;
using virtualenv::Observation;
using virtualenv::PredicateEvals;

enum class StopReason { kTerminated, kMaxSteps, kGuardExhaustion, kError };

std::string_view to_string(StopReason reason);
StopReason parse_stop_reason(std::string_view name);

// Per-step output of the multi-agent loop.
struct RoleAnnotation {
  std::string subgoal;
  std::string judgment;  // SUCCESS | FAILURE
  std::string diagnostic;
  std::vector<std::string> notes;  // N_{t+1}
  bool operator==(const RoleAnnotation&) const = default;
};

struct Step {
  std::size_t index = 0;  // 1-based
  Observation observation;  // o_t, seen before the action
  Action action;
  std::optional<std::string> thought;
  std::optional<std::string> conclusion;
  std::optional<transport::GenerationRecord> generation;
  PredicateEvals predicate_evals;  // evaluated on the state after `action`
  std::optional<std::string> error;  // illegal action diagnostic
  std::optional<RoleAnnotation> roles;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  ComposedTask task;
  std::vector<Step> steps;
  StopReason stop_reason = StopReason::kTerminated;
  DeviceFamily device = DeviceFamily::kDesktop;
  std::uint64_t policy_snapshot = 0;
  bool operator==(const Trajectory&) const = default;
};

struct CheckpointReport {
  std::vector<int> c;  // c_k = max over steps of phi_k
  std::size_t m = 0;   // longest all-ones prefix of c
  std::size_t K() const { return c.size(); }
  bool operator==(const CheckpointReport&) const = default;
};

std::size_t longest_prefix(std::span<const int> c);

// Throws Error(kMissingPredicate) when a checkpoint id is absent from a step.
CheckpointReport evaluate_checkpoints(const Trajectory& traj,
                                      const std::vector<std::string>& checkpoint_ids);
inline CheckpointReport evaluate_checkpoints(const Trajectory& traj) {
  return evaluate_checkpoints(traj, traj.task.checkpoint_ids);
}

struct TruncationResult {
  Trajectory truncated;  // steps 1..t_star, original task
  std::size_t t_star = 0;
  ComposedTask repaired_task;  // composed from the uncompleted suffix of the path
  CheckpointReport report;
};

struct Accepted {
  Trajectory trajectory;
  CheckpointReport report;
};
struct Partial {
  TruncationResult result;
};
struct Rejected {
  CheckpointReport report;
};

using Classification = std::variant<Accepted, Partial, Rejected>;

// m = K accepts the whole rollout, 0 < m < K truncates to the last step where
// phi_m held and re-composes the task from path nodes m+1..K, m = 0 rejects.
Classification truncate_and_repair(const Trajectory& traj, const taskgraph::TaskDag& dag,
                                   const taskgraph::ComposerOptions& composer = {},
                                   std::uint64_t compose_seed = 0);

// ---- dataset ---------------------------------------------------------------

enum class RecordClass { kRaw, kAccepted, kPartial };

std::string_view to_string(RecordClass c);
RecordClass parse_record_class(std::string_view name);

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetRecord {
  // For partial records: the repaired task plus the truncated steps.
  Trajectory trajectory;
  RecordClass classification = RecordClass::kRaw;
  std::optional<ComposedTask> original_task;
  std::optional<std::size_t> t_star;
  bool operator==(const DatasetRecord&) const = default;
};

DatasetRecord to_record(const Accepted& accepted);
DatasetRecord to_record(const Partial& partial);
DatasetRecord raw_record(const Trajectory& traj);

std::string encode_record(const DatasetRecord& record);  // single line, no newline
DatasetRecord decode_record(std::string_view line);       // throws kParseError

// One record per line; returns the number written. Throws kIoFailure.
std::size_t write_dataset(const std::vector<DatasetRecord>& records, const std::string& path);
std::vector<DatasetRecord> read_dataset(const std::string& path);

}  // namespace flywheel::trajectory
