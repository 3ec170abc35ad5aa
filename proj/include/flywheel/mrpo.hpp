#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flywheel/device.hpp"
#include "flywheel/random.hpp"
#include "flywheel/taskgraph.hpp"
#include "flywheel/trajectory.hpp"

namespace flywheel::mrpo {

using taskgraph::ComposedTask;
using trajectory::Trajectory;

// Stochastic trajectory sampler pinned to one parameter snapshot.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Trajectory sample(const ComposedTask& task, DeviceFamily device, Rng& rng) const = 0;
  virtual std::uint64_t snapshot_id() const = 0;
};

// Succeeds with probability p. Trajectory length is uniform in
// [min_length, max_length]; the last step satisfies every checkpoint of the
// task on success and none on failure.
class BernoulliPolicy final : public Policy {
 public:
  explicit BernoulliPolicy(double p, std::size_t min_length = 1, std::size_t max_length = 1,
                           std::uint64_t snapshot = 1);
  Trajectory sample(const ComposedTask& task, DeviceFamily device, Rng& rng) const override;
  std::uint64_t snapshot_id() const override { return snapshot_; }
  double success_probability() const { return p_; }

 private:
  double p_;
  std::size_t min_length_;
  std::size_t max_length_;
  std::uint64_t snapshot_;
};

// Single-node task with one checkpoint, convenient for buffer experiments.
ComposedTask simple_task(const std::string& id, const std::string& checkpoint = "goal");

using OutcomeJudge = std::function<int(const Trajectory&)>;

// z = 1 iff the longest completed checkpoint prefix covers the whole path.
int checkpoint_outcome(const Trajectory& traj);

bool is_collapsed(std::span<const int> outcomes);

// P(0 < sum Z < kn) for a pool of kn i.i.d. Bernoulli(p) outcomes.
double diversity_probability(double p, std::size_t k, std::size_t n);

struct MrpoConfig {
  std::size_t n = 4;
  std::size_t k = 2;
  OutcomeJudge judge;   // checkpoint_outcome when empty
  std::size_t jobs = 1;  // pool sampling threads
};

enum class Provenance { kPlainSubsample, kSwapped, kEmpty };

std::string_view to_string(Provenance p);

struct Member {
  Trajectory trajectory;
  int z = 0;
  std::size_t pool_index = 0;
};

struct RolloutPool {
  ComposedTask task;
  std::vector<Member> members;
  std::size_t k = 0;
  std::size_t n = 0;
  std::uint64_t snapshot_id = 0;

  std::vector<int> outcomes() const;
  bool diverse() const;  // the pool-diversity event
};

struct RolloutGroup {
  std::vector<Member> members;
  Provenance provenance = Provenance::kEmpty;
  std::uint64_t snapshot_id = 0;
  std::vector<std::size_t> subsample;  // pool indices of the uniform subsample
  std::optional<std::size_t> swapped_slot;

  std::vector<int> outcomes() const;
  bool empty() const { return provenance == Provenance::kEmpty; }
};

// kn on-policy rollouts. Each rollout gets its own seed drawn from `rng` in
// order, so the result does not depend on cfg.jobs.
RolloutPool sample_pool(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                        const MrpoConfig& cfg, Rng& rng);

// Uniform n-subset of {0..pool_size-1}, in draw order (partial Fisher-Yates).
std::vector<std::size_t> uniform_subsample(std::size_t pool_size, std::size_t n, Rng& rng);

// Replaces one uniformly chosen slot of a collapsed subsample with a uniformly
// chosen opposite-outcome pool member. Requires the pool to be diverse.
RolloutGroup swap1(const RolloutPool& pool, const std::vector<std::size_t>& subsample, Rng& rng);

// Case analysis over one subsample draw: plain, swapped, or empty.
RolloutGroup assemble_group(const RolloutPool& pool, Rng& rng);

RolloutGroup build_group(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                         const MrpoConfig& cfg, Rng& rng);

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
};

using TrajectoryStatistic = std::function<double(const Trajectory&)>;

// Monte-Carlo mean of (1/n) sum f over plain uniform subsamples (no swap).
MeanEstimate subsample_statistic_mean(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                                      const MrpoConfig& cfg, const TrajectoryStatistic& f,
                                      std::size_t trials, Rng& rng);

// Mean of f over direct policy samples, for comparison.
MeanEstimate direct_statistic_mean(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                                   const TrajectoryStatistic& f, std::size_t trials, Rng& rng);

inline constexpr double kAdvantageEpsilon = 1e-8;

// (z_i - mean) / (population std + eps). Throws kCollapsedGroup.
std::vector<double> compute_advantages(std::span<const int> outcomes);
std::vector<double> compute_advantages(const RolloutGroup& group);

struct DiversitySimulation {
  std::size_t trials = 0;
  std::size_t diverse = 0;
  double empirical = 0.0;
  double closed_form = 0.0;
  double standard_error = 0.0;  // of the empirical frequency, from the closed form
  bool within(double sigmas) const;
};

// Samples bare Bernoulli outcome pools; no trajectories are built.
DiversitySimulation simulate_diversity(double p, std::size_t k, std::size_t n, std::size_t trials, Rng& rng);

// One JSON object per line: task id, snapshot id, outcomes, advantages, provenance.
std::string dump_group(const std::string& task_id, const RolloutGroup& group);

}  // namespace flywheel::mrpo
