#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flywheel/taskgraph.hpp"
#include "flywheel/trajectory.hpp"
#include "flywheel/virtualenv.hpp"

namespace flywheel::pipeline {

inline constexpr const char* kSeedEnvVar = "FLYWHEEL_SEED";

struct DagSource {
  std::string file;  // resolved against the config's directory
  std::string env;   // environment kind
  std::size_t tasks = 0;
};

struct RolloutLimits {
  std::size_t max_steps = 32;
  std::size_t max_path_length = 8;
  // Probability that a task's canonical script is cut short before running.
  double fault_rate = 0.0;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::vector<DagSource> dags;
  std::vector<std::uint64_t> scenario_seeds;  // cycled per task; derived when empty
  RolloutLimits rollout;
  std::size_t mrpo_n = 4;
  std::size_t mrpo_k = 2;
  std::string schedule = "cyclic";
  std::string dataset;                 // accepted + partial records
  std::optional<std::string> raw_out;  // every rollout, unclassified
  std::size_t jobs = 1;
};

// Throws kConfigError for malformed documents or missing DAG files.
PipelineConfig parse_config(const std::string& text, const std::string& base_dir = ".");
// Applies the FLYWHEEL_SEED override.
PipelineConfig load_config(const std::string& path);

struct PipelineReport {
  std::size_t tasks_synthesized = 0;
  std::size_t accepted = 0;
  std::size_t partial = 0;
  std::size_t rejected = 0;
  std::size_t errors = 0;
  std::size_t records_written = 0;
  bool operator==(const PipelineReport&) const = default;
};

std::string encode_report(const PipelineReport& report);

// Task i of component c uses derive_seed(seed, c, i); the synthesis,
// scenario, fault and repair streams are separate components.
PipelineReport run_pipeline(const PipelineConfig& config);

// ---- building blocks shared with the command-line tool ---------------------

std::vector<taskgraph::ComposedTask> synthesize_tasks(const taskgraph::TaskDag& dag, std::size_t count,
                                                      std::uint64_t seed, std::size_t max_path_length);

// Registry environment of `kind` with the DAG file's predicates added.
virtualenv::VirtualEnv environment_for(const std::string& kind, const std::string& dag_file);

// Canonical script for the task from the rule-based decomposer, optionally
// truncated to `keep` actions, followed by terminate.
std::vector<virtualenv::Action> canonical_script(const taskgraph::ComposedTask& task,
                                                 const virtualenv::VirtualEnv& env,
                                                 const virtualenv::ScenarioSpec& scenario,
                                                 std::optional<std::size_t> keep = std::nullopt);

trajectory::Trajectory scripted_rollout(const taskgraph::ComposedTask& task, const virtualenv::VirtualEnv& env,
                                        const virtualenv::ScenarioSpec& scenario,
                                        const std::vector<virtualenv::Action>& script, std::size_t max_steps);

// Accepted and partial outcomes become records; rejected ones do not.
std::optional<trajectory::DatasetRecord> filter_record(const trajectory::Trajectory& traj,
                                                       const taskgraph::TaskDag& dag, std::uint64_t compose_seed);

// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::string& path);

}  // namespace flywheel::pipeline
