#include "flywheel/trajectory.hpp"

#include <fstream>

#include "flywheel/error.hpp"
#include "flywheel/json_io.hpp"

namespace flywheel::trajectory {

using nlohmann::json;

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kTerminated: return "terminated";
    case StopReason::kMaxSteps: return "max_steps";
    case StopReason::kGuardExhaustion: return "guard_exhaustion";
    case StopReason::kError: return "error";
  }
  return "unknown";
}

StopReason parse_stop_reason(std::string_view name) {
  for (auto r : {StopReason::kTerminated, StopReason::kMaxSteps, StopReason::kGuardExhaustion, StopReason::kError})
    if (to_string(r) == name) return r;
  throw Error(ErrorCode::kParseError, "unknown stop reason '" + std::string(name) + "'");
}

std::size_t longest_prefix(std::span<const int> c) {
  std::size_t m = 0;
  while (m < c.size() && c[m] == 1) ++m;
  return m;
}

CheckpointReport evaluate_checkpoints(const Trajectory& traj,
                                      const std::vector<std::string>& checkpoint_ids) {
  CheckpointReport report;
  report.c.assign(checkpoint_ids.size(), 0);
  for (const auto& step : traj.steps) {
    for (std::size_t k = 0; k < checkpoint_ids.size(); ++k) {
      const auto it = step.predicate_evals.find(checkpoint_ids[k]);
      if (it == step.predicate_evals.end())
        throw Error(ErrorCode::kMissingPredicate,
                    checkpoint_ids[k] + " (step " + std::to_string(step.index) + ")");
      if (it->second == 1) report.c[k] = 1;
    }
  }
  report.m = longest_prefix(report.c);
  return report;
}

Classification truncate_and_repair(const Trajectory& traj, const taskgraph::TaskDag& dag,
                                   const taskgraph::ComposerOptions& composer, std::uint64_t compose_seed) {
  const CheckpointReport report = evaluate_checkpoints(traj);
  const std::size_t K = report.K();
  const std::size_t m = report.m;
  if (m == K) return Accepted{traj, report};
  if (m == 0) return Rejected{report};

  const std::string& last_verified = traj.task.checkpoint_ids[m - 1];
  std::size_t t_star = 0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t)
    if (traj.steps[t].predicate_evals.at(last_verified) == 1) t_star = t + 1;

  TruncationResult result;
  result.report = report;
  result.t_star = t_star;
  result.truncated = traj;
  result.truncated.steps.resize(t_star);

  taskgraph::TaskPath remaining;
  remaining.nodes.assign(traj.task.path.nodes.begin() + static_cast<std::ptrdiff_t>(m),
                         traj.task.path.nodes.end());
  Rng rng(compose_seed);
  result.repaired_task =
      taskgraph::compose_instruction(remaining, dag, traj.task.entity_bindings, rng, composer);
  return Partial{std::move(result)};
}

std::string_view to_string(RecordClass c) {
  switch (c) {
    case RecordClass::kRaw: return "raw";
    case RecordClass::kAccepted: return "accepted";
    case RecordClass::kPartial: return "partial";
  }
  return "unknown";
}

RecordClass parse_record_class(std::string_view name) {
  for (auto c : {RecordClass::kRaw, RecordClass::kAccepted, RecordClass::kPartial})
    if (to_string(c) == name) return c;
  throw Error(ErrorCode::kParseError, "unknown classification '" + std::string(name) + "'");
}

DatasetRecord to_record(const Accepted& accepted) {
  return {accepted.trajectory, RecordClass::kAccepted, std::nullopt, std::nullopt};
}

DatasetRecord to_record(const Partial& partial) {
  DatasetRecord record;
  record.trajectory = partial.result.truncated;
  record.trajectory.task = partial.result.repaired_task;
  record.classification = RecordClass::kPartial;
  record.original_task = partial.result.truncated.task;
  record.t_star = partial.result.t_star;
  return record;
}

DatasetRecord raw_record(const Trajectory& traj) {
  return {traj, RecordClass::kRaw, std::nullopt, std::nullopt};
}

std::string encode_record(const DatasetRecord& record) {
  const Trajectory& traj = record.trajectory;
  json j;
  j["v"] = kDatasetSchemaVersion;
  j["classification"] = to_string(record.classification);
  j["task"] = traj.task;
  if (record.original_task) j["original_task"] = *record.original_task;
  if (record.t_star) j["t_star"] = *record.t_star;
  j["device"] = traj.device;
  j["stop_reason"] = to_string(traj.stop_reason);
  j["policy_snapshot"] = traj.policy_snapshot;
  j["steps"] = traj.steps;
  return j.dump();
}

DatasetRecord decode_record(std::string_view line) {
  try {
    const json j = json::parse(line);
    if (j.at("v").get<int>() != kDatasetSchemaVersion)
      throw Error(ErrorCode::kParseError, "unsupported dataset schema version");
    DatasetRecord record;
    record.classification = parse_record_class(j.at("classification").get<std::string>());
    record.trajectory.task = j.at("task").get<taskgraph::ComposedTask>();
    if (j.contains("original_task")) record.original_task = j.at("original_task").get<taskgraph::ComposedTask>();
    if (j.contains("t_star")) record.t_star = j.at("t_star").get<std::size_t>();
    record.trajectory.device = j.at("device").get<DeviceFamily>();
    record.trajectory.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    record.trajectory.policy_snapshot = j.value("policy_snapshot", std::uint64_t{0});
    record.trajectory.steps = j.at("steps").get<std::vector<Step>>();
    return record;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

std::size_t write_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  for (const auto& r : records) out << encode_record(r) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIoFailure, "write to " + path + " failed");
  return records.size();
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::vector<DatasetRecord> records;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) records.push_back(decode_record(line));
  return records;
}

}  // namespace flywheel::trajectory
