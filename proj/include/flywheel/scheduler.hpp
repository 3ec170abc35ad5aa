#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flywheel/device.hpp"
#include "flywheel/mrpo.hpp"
#include "flywheel/random.hpp"

namespace flywheel::scheduler {

using Vector = std::vector<double>;

// One contextual-bandit instance. The task's instruction is its lookup key.
struct BanditTask {
  taskgraph::ComposedTask task;
  Vector features;
  std::size_t target_arm = 0;
};

inline constexpr const char* kTargetCheckpoint = "target_hit";
inline constexpr const char* kSelectArmTool = "select_arm";

BanditTask make_bandit_task(const std::string& id, Vector features, std::size_t target_arm);

class BanditCatalog {
 public:
  BanditCatalog() = default;
  explicit BanditCatalog(const std::vector<BanditTask>& tasks);
  void add(const BanditTask& task);
  const BanditTask& find(const std::string& instruction) const;  // kInvalidArgument if absent

 private:
  std::map<std::string, BanditTask> tasks_;
};

// Softmax bandit: logits[a] = sum_f (W[a][f] + H_d[a][f]) * phi[f].
// theta is laid out as [shared | mobile head | desktop head | web head], each
// block arms x features, row-major by arm.
struct ToyPolicyParams {
  std::size_t arms = 0;
  std::size_t features = 0;
  Vector theta;
  double eta = 0.1;

  ToyPolicyParams() = default;
  ToyPolicyParams(std::size_t arms, std::size_t features, double eta);

  std::size_t block_size() const { return arms * features; }
  std::size_t dimension() const { return block_size() * (1 + kAllDevices.size()); }
  std::size_t shared_offset() const { return 0; }
  std::size_t head_offset(DeviceFamily d) const { return block_size() * (1 + static_cast<std::size_t>(d)); }
  std::span<const double> shared() const { return {theta.data(), block_size()}; }
  std::span<const double> head(DeviceFamily d) const { return {theta.data() + head_offset(d), block_size()}; }
  bool operator==(const ToyPolicyParams&) const = default;
};

Vector action_probabilities(const ToyPolicyParams& params, DeviceFamily device, std::span<const double> features);

// pi_d(target arm): the closed-form expected return of one task.
double expected_return(const ToyPolicyParams& params, DeviceFamily device, const BanditTask& task);

class SoftmaxBanditPolicy final : public mrpo::Policy {
 public:
  SoftmaxBanditPolicy(ToyPolicyParams params, const BanditCatalog& catalog, std::uint64_t snapshot);
  mrpo::Trajectory sample(const mrpo::ComposedTask& task, DeviceFamily device, Rng& rng) const override;
  std::uint64_t snapshot_id() const override { return snapshot_; }

 private:
  ToyPolicyParams params_;
  const BanditCatalog& catalog_;
  std::uint64_t snapshot_;
};

// Arm recorded by the trajectory's select_arm tool call.
std::size_t chosen_arm(const mrpo::Trajectory& traj);

struct BatchItem {
  mrpo::RolloutGroup group;
  std::vector<double> advantages;
};

BatchItem make_batch_item(mrpo::RolloutGroup group);

// Mean over all trajectories in the batch of grad[-A log pi(a)]. Empty groups
// contribute nothing. Throws kEmptyBatch when no trajectory remains and
// kInvalidArgument when a trajectory is from another device.
Vector device_gradient(const ToyPolicyParams& params, DeviceFamily device, const std::vector<BatchItem>& batch,
                       const BanditCatalog& catalog);

// theta - eta * g restricted to the shared block and the head of `device`.
ToyPolicyParams stage_update(const ToyPolicyParams& params, DeviceFamily device, std::span<const double> g,
                             double eta);

// sum_d lambda_d g_d, accumulated in device order. Weights must be
// non-negative and sum to 1 within 1e-12 (kWeightSumInvalid).
Vector mixture_gradient(const std::map<DeviceFamily, Vector>& gradients, const std::map<DeviceFamily, double>& lambda,
                        std::size_t dimension);

ToyPolicyParams mixed_update(const ToyPolicyParams& params, const std::map<DeviceFamily, Vector>& gradients,
                             const std::map<DeviceFamily, double>& lambda, double eta);

double gradient_conflict(std::span<const double> g1, std::span<const double> g2);

class StageSchedule {
 public:
  enum class Mode { kCyclic, kCurriculum };

  // cyclic: order repeats. curriculum: explicit stage list, the last entry
  // repeats once the list is exhausted.
  StageSchedule(Mode mode, std::vector<DeviceFamily> order);

  // "cyclic" (uses `devices`) or "curriculum:mobile,desktop,...".
  static StageSchedule parse(const std::string& spec, const std::vector<DeviceFamily>& devices);

  DeviceFamily device_at(std::size_t stage) const;
  Mode mode() const { return mode_; }
  const std::vector<DeviceFamily>& order() const { return order_; }

 private:
  Mode mode_;
  std::vector<DeviceFamily> order_;
};

struct StageMetrics {
  std::size_t stage = 0;
  DeviceFamily device = DeviceFamily::kMobile;
  double success_rate = 0.0;  // over every pooled rollout of the stage
  std::size_t groups = 0;
  std::size_t empty_groups = 0;
  // Inner products of this stage's gradient with the latest gradient of each
  // other device; absent until another device has been trained.
  std::optional<double> conflict_min;
  std::optional<double> conflict_mean;
  double return_before = 0.0;  // mean expected return over the device's tasks
  double return_after = 0.0;
  Vector gradient;
};

struct AlternatingResult {
  ToyPolicyParams params;
  std::vector<StageMetrics> stages;
};

using TaskSets = std::map<DeviceFamily, std::vector<BanditTask>>;

struct AlternatingOptions {
  std::size_t stages = 0;
  std::size_t batches_per_stage = 1;  // one group per task per batch
};

AlternatingResult run_alternating(const ToyPolicyParams& params, const StageSchedule& schedule,
                                  const TaskSets& tasks, const mrpo::MrpoConfig& cfg,
                                  const AlternatingOptions& options, Rng& rng);

// {stage, device, success_rate, conflict_min, conflict_mean}
std::string encode_stage_metrics(const StageMetrics& metrics);

// Two arms, one constant feature; mobile rewards arm 0 and desktop arm 1, so
// the shared block receives opposing gradients.
struct ConflictFixture {
  ToyPolicyParams params;
  TaskSets tasks;
  BanditCatalog catalog;
};

ConflictFixture adversarial_fixture();

}  // namespace flywheel::scheduler
