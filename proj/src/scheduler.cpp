#include "flywheel/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flywheel/error.hpp"
#include "json.hpp"

namespace flywheel::scheduler {

BanditTask make_bandit_task(const std::string& id, Vector features, std::size_t target_arm) {
  BanditTask t;
  t.task = mrpo::simple_task(id, kTargetCheckpoint);
  t.features = std::move(features);
  t.target_arm = target_arm;
  return t;
}

BanditCatalog::BanditCatalog(const std::vector<BanditTask>& tasks) {
  for (const auto& t : tasks) add(t);
}

void BanditCatalog::add(const BanditTask& task) { tasks_[task.task.instruction] = task; }

const BanditTask& BanditCatalog::find(const std::string& instruction) const {
  const auto it = tasks_.find(instruction);
  if (it == tasks_.end()) throw Error(ErrorCode::kInvalidArgument, "no bandit task '" + instruction + "'");
  return it->second;
}

ToyPolicyParams::ToyPolicyParams(std::size_t arms_, std::size_t features_, double eta_)
    : arms(arms_), features(features_), eta(eta_) {
  if (arms == 0 || features == 0) throw Error(ErrorCode::kInvalidArgument, "toy policy needs arms and features");
  theta.assign(dimension(), 0.0);
}

namespace {

void require_features(const ToyPolicyParams& params, std::span<const double> features) {
  if (features.size() != params.features)
    throw Error(ErrorCode::kDimensionMismatch, "expected " + std::to_string(params.features) + " features, got " +
                                                   std::to_string(features.size()));
}

void require_dimension(const ToyPolicyParams& params, std::size_t size) {
  if (params.theta.size() != params.dimension() || size != params.dimension())
    throw Error(ErrorCode::kDimensionMismatch, "expected dimension " + std::to_string(params.dimension()) +
                                                   ", got " + std::to_string(size));
}

}  // namespace

Vector action_probabilities(const ToyPolicyParams& params, DeviceFamily device, std::span<const double> features) {
  require_features(params, features);
  const auto shared = params.shared();
  const auto head = params.head(device);
  Vector logits(params.arms, 0.0);
  for (std::size_t a = 0; a < params.arms; ++a)
    for (std::size_t f = 0; f < params.features; ++f) {
      const std::size_t i = a * params.features + f;
      logits[a] += (shared[i] + head[i]) * features[f];
    }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - top));
  for (double& l : logits) l /= total;
  return logits;
}

double expected_return(const ToyPolicyParams& params, DeviceFamily device, const BanditTask& task) {
  return action_probabilities(params, device, task.features).at(task.target_arm);
}

SoftmaxBanditPolicy::SoftmaxBanditPolicy(ToyPolicyParams params, const BanditCatalog& catalog, std::uint64_t snapshot)
    : params_(std::move(params)), catalog_(catalog), snapshot_(snapshot) {}

mrpo::Trajectory SoftmaxBanditPolicy::sample(const mrpo::ComposedTask& task, DeviceFamily device, Rng& rng) const {
  const BanditTask& bandit = catalog_.find(task.instruction);
  const Vector probs = action_probabilities(params_, device, bandit.features);
  const double u = rng.uniform01();
  std::size_t arm = probs.size() - 1;
  double cumulative = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    cumulative += probs[a];
    if (u < cumulative) {
      arm = a;
      break;
    }
  }
  mrpo::Trajectory traj;
  traj.task = task;
  traj.device = device;
  traj.policy_snapshot = snapshot_;
  traj.stop_reason = trajectory::StopReason::kTerminated;
  trajectory::Step step;
  step.index = 1;
  step.action = virtualenv::Action::tool_call(kSelectArmTool, {{"arm", std::to_string(arm)}});
  step.predicate_evals[kTargetCheckpoint] = arm == bandit.target_arm ? 1 : 0;
  traj.steps.push_back(std::move(step));
  return traj;
}

std::size_t chosen_arm(const mrpo::Trajectory& traj) {
  for (auto it = traj.steps.rbegin(); it != traj.steps.rend(); ++it) {
    if (it->action.tool_name != kSelectArmTool) continue;
    const auto arg = it->action.arguments.find("arm");
    if (arg == it->action.arguments.end()) break;
    return std::stoul(arg->second);
  }
  throw Error(ErrorCode::kInvalidArgument, "trajectory has no select_arm action");
}

BatchItem make_batch_item(mrpo::RolloutGroup group) {
  BatchItem item;
  if (!group.empty()) item.advantages = mrpo::compute_advantages(group);
  item.group = std::move(group);
  return item;
}

Vector device_gradient(const ToyPolicyParams& params, DeviceFamily device, const std::vector<BatchItem>& batch,
                       const BanditCatalog& catalog) {
  require_dimension(params, params.theta.size());
  Vector g(params.dimension(), 0.0);
  const std::size_t shared = params.shared_offset();
  const std::size_t head = params.head_offset(device);
  std::size_t count = 0;
  for (const auto& item : batch) {
    if (item.group.empty()) continue;
    if (item.advantages.size() != item.group.members.size())
      throw Error(ErrorCode::kDimensionMismatch, "one advantage per group member required");
    for (std::size_t i = 0; i < item.group.members.size(); ++i) {
      const auto& traj = item.group.members[i].trajectory;
      if (traj.device != device)
        throw Error(ErrorCode::kInvalidArgument, "batch for " + std::string(to_string(device)) +
                                                     " contains a " + std::string(to_string(traj.device)) +
                                                     " trajectory");
      const BanditTask& task = catalog.find(traj.task.instruction);
      const Vector probs = action_probabilities(params, device, task.features);
      const std::size_t a = chosen_arm(traj);
      const double adv = item.advantages[i];
      for (std::size_t b = 0; b < params.arms; ++b) {
        const double dlogit = -adv * ((b == a ? 1.0 : 0.0) - probs[b]);
        for (std::size_t f = 0; f < params.features; ++f) {
          const double v = dlogit * task.features[f];
          g[shared + b * params.features + f] += v;
          g[head + b * params.features + f] += v;
        }
      }
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::kEmptyBatch, "no trajectories for " + std::string(to_string(device)));
  for (double& v : g) v /= static_cast<double>(count);
  return g;
}

ToyPolicyParams stage_update(const ToyPolicyParams& params, DeviceFamily device, std::span<const double> g,
                             double eta) {
  require_dimension(params, g.size());
  ToyPolicyParams next = params;
  const std::size_t block = params.block_size();
  for (const std::size_t offset : {params.shared_offset(), params.head_offset(device)})
    for (std::size_t i = offset; i < offset + block; ++i) next.theta[i] = params.theta[i] - eta * g[i];
  return next;
}

Vector mixture_gradient(const std::map<DeviceFamily, Vector>& gradients, const std::map<DeviceFamily, double>& lambda,
                        std::size_t dimension) {
  double total = 0.0;
  for (const auto& [d, w] : lambda) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kWeightSumInvalid, "negative weight for " + std::string(to_string(d)));
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorCode::kWeightSumInvalid, "weights sum to " + std::to_string(total));
  Vector g(dimension, 0.0);
  for (const auto& [d, w] : lambda) {
    const auto it = gradients.find(d);
    if (it == gradients.end())
      throw Error(ErrorCode::kInvalidArgument, "no gradient for " + std::string(to_string(d)));
    if (it->second.size() != dimension) throw Error(ErrorCode::kDimensionMismatch, "gradient dimension");
    for (std::size_t i = 0; i < dimension; ++i) g[i] += w * it->second[i];
  }
  return g;
}

ToyPolicyParams mixed_update(const ToyPolicyParams& params, const std::map<DeviceFamily, Vector>& gradients,
                             const std::map<DeviceFamily, double>& lambda, double eta) {
  require_dimension(params, params.theta.size());
  const Vector g = mixture_gradient(gradients, lambda, params.dimension());
  ToyPolicyParams next = params;
  for (std::size_t i = 0; i < g.size(); ++i) next.theta[i] = params.theta[i] - eta * g[i];
  return next;
}

double gradient_conflict(std::span<const double> g1, std::span<const double> g2) {
  if (g1.size() != g2.size())
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(g1.size()) + " vs " + std::to_string(g2.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) dot += g1[i] * g2[i];
  return dot;
}

StageSchedule::StageSchedule(Mode mode, std::vector<DeviceFamily> order) : mode_(mode), order_(std::move(order)) {
  if (order_.empty()) throw Error(ErrorCode::kConfigError, "schedule needs at least one device");
}

StageSchedule StageSchedule::parse(const std::string& spec, const std::vector<DeviceFamily>& devices) {
  if (spec == "cyclic") return StageSchedule(Mode::kCyclic, devices);
  const std::string prefix = "curriculum:";
  if (spec.rfind(prefix, 0) != 0) throw Error(ErrorCode::kConfigError, "unknown schedule '" + spec + "'");
  std::vector<DeviceFamily> stages;
  std::size_t begin = prefix.size();
  while (begin <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', begin), spec.size());
    try {
      stages.push_back(parse_device(spec.substr(begin, end - begin)));
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfigError, e.detail());
    }
    begin = end + 1;
  }
  return StageSchedule(Mode::kCurriculum, std::move(stages));
}

DeviceFamily StageSchedule::device_at(std::size_t stage) const {
  if (mode_ == Mode::kCyclic) return order_[stage % order_.size()];
  return order_[std::min(stage, order_.size() - 1)];
}

namespace {

double mean_return(const ToyPolicyParams& params, DeviceFamily device, const std::vector<BanditTask>& tasks) {
  double total = 0.0;
  for (const auto& t : tasks) total += expected_return(params, device, t);
  return total / static_cast<double>(tasks.size());
}

}  // namespace

AlternatingResult run_alternating(const ToyPolicyParams& params, const StageSchedule& schedule,
                                  const TaskSets& tasks, const mrpo::MrpoConfig& cfg,
                                  const AlternatingOptions& options, Rng& rng) {
  BanditCatalog catalog;
  for (const auto& [d, list] : tasks)
    for (const auto& t : list) catalog.add(t);

  AlternatingResult result{params, {}};
  std::map<DeviceFamily, Vector> latest;
  for (std::size_t s = 0; s < options.stages; ++s) {
    const DeviceFamily d = schedule.device_at(s);
    const auto it = tasks.find(d);
    if (it == tasks.end() || it->second.empty())
      throw Error(ErrorCode::kInvalidArgument, "no tasks for " + std::string(to_string(d)));
    const auto& device_tasks = it->second;

    StageMetrics m;
    m.stage = s;
    m.device = d;
    m.return_before = mean_return(result.params, d, device_tasks);

    const SoftmaxBanditPolicy policy(result.params, catalog, s + 1);
    std::vector<BatchItem> batch;
    std::size_t successes = 0, rollouts = 0;
    for (std::size_t b = 0; b < options.batches_per_stage; ++b) {
      for (const auto& t : device_tasks) {
        const auto pool = mrpo::sample_pool(policy, t.task, d, cfg, rng);
        for (int z : pool.outcomes()) successes += static_cast<std::size_t>(z);
        rollouts += pool.members.size();
        auto group = mrpo::assemble_group(pool, rng);
        ++m.groups;
        if (group.empty()) {
          ++m.empty_groups;
          continue;
        }
        batch.push_back(make_batch_item(std::move(group)));
      }
    }
    m.success_rate = rollouts ? static_cast<double>(successes) / static_cast<double>(rollouts) : 0.0;

    if (batch.empty()) {
      m.gradient.assign(result.params.dimension(), 0.0);
    } else {
      m.gradient = device_gradient(result.params, d, batch, catalog);
      result.params = stage_update(result.params, d, m.gradient, result.params.eta);
    }

    double lo = std::numeric_limits<double>::infinity(), sum = 0.0;
    std::size_t compared = 0;
    for (const auto& [other, g] : latest) {
      if (other == d) continue;
      const double c = gradient_conflict(m.gradient, g);
      lo = std::min(lo, c);
      sum += c;
      ++compared;
    }
    if (compared) {
      m.conflict_min = lo;
      m.conflict_mean = sum / static_cast<double>(compared);
    }
    latest[d] = m.gradient;
    m.return_after = mean_return(result.params, d, device_tasks);
    result.stages.push_back(std::move(m));
  }
  return result;
}

std::string encode_stage_metrics(const StageMetrics& m) {
  nlohmann::json j;
  j["stage"] = m.stage;
  j["device"] = to_string(m.device);
  j["success_rate"] = m.success_rate;
  j["conflict_min"] = m.conflict_min ? nlohmann::json(*m.conflict_min) : nlohmann::json(nullptr);
  j["conflict_mean"] = m.conflict_mean ? nlohmann::json(*m.conflict_mean) : nlohmann::json(nullptr);
  return j.dump();
}

ConflictFixture adversarial_fixture() {
  ConflictFixture fx;
  fx.params = ToyPolicyParams(2, 1, 0.5);
  fx.tasks[DeviceFamily::kMobile] = {make_bandit_task("pick-mobile", {1.0}, 0)};
  fx.tasks[DeviceFamily::kDesktop] = {make_bandit_task("pick-desktop", {1.0}, 1)};
  for (const auto& [d, list] : fx.tasks)
    for (const auto& t : list) fx.catalog.add(t);
  return fx;
}

}  // namespace flywheel::scheduler
