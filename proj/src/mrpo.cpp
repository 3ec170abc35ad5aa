#include "flywheel/mrpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "flywheel/error.hpp"
#include "json.hpp"

namespace flywheel::mrpo {

BernoulliPolicy::BernoulliPolicy(double p, std::size_t min_length, std::size_t max_length,
                                 std::uint64_t snapshot)
    : p_(p), min_length_(min_length), max_length_(max_length), snapshot_(snapshot) {
  if (p < 0.0 || p > 1.0) throw Error(ErrorCode::kInvalidArgument, "success probability outside [0, 1]");
  if (min_length == 0 || max_length < min_length)
    throw Error(ErrorCode::kInvalidArgument, "need 1 <= min_length <= max_length");
}

Trajectory BernoulliPolicy::sample(const ComposedTask& task, DeviceFamily device, Rng& rng) const {
  const int z = rng.bernoulli(p_) ? 1 : 0;
  const std::size_t length = min_length_ + rng.uniform_index(max_length_ - min_length_ + 1);
  Trajectory traj;
  traj.task = task;
  traj.device = device;
  traj.policy_snapshot = snapshot_;
  traj.stop_reason = trajectory::StopReason::kTerminated;
  traj.steps.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    auto& step = traj.steps[t];
    step.index = t + 1;
    step.action = t + 1 == length ? virtualenv::Action::terminate() : virtualenv::Action::key("Wait");
    for (const auto& id : task.checkpoint_ids) step.predicate_evals[id] = (t + 1 == length) ? z : 0;
  }
  return traj;
}

ComposedTask simple_task(const std::string& id, const std::string& checkpoint) {
  ComposedTask task;
  task.path.nodes = {id};
  task.instruction = id;
  task.checkpoint_ids = {checkpoint};
  return task;
}

int checkpoint_outcome(const Trajectory& traj) {
  const auto report = trajectory::evaluate_checkpoints(traj);
  return report.m == report.K() ? 1 : 0;
}

bool is_collapsed(std::span<const int> outcomes) {
  const auto sum = std::accumulate(outcomes.begin(), outcomes.end(), std::size_t{0});
  return sum == 0 || sum == outcomes.size();
}

double diversity_probability(double p, std::size_t k, std::size_t n) {
  const double kn = static_cast<double>(k * n);
  return 1.0 - std::pow(p, kn) - std::pow(1.0 - p, kn);
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kPlainSubsample: return "plain_subsample";
    case Provenance::kSwapped: return "swapped";
    case Provenance::kEmpty: return "empty";
  }
  return "unknown";
}

std::vector<int> RolloutPool::outcomes() const {
  std::vector<int> z;
  z.reserve(members.size());
  for (const auto& m : members) z.push_back(m.z);
  return z;
}

bool RolloutPool::diverse() const { return !is_collapsed(outcomes()); }

std::vector<int> RolloutGroup::outcomes() const {
  std::vector<int> z;
  z.reserve(members.size());
  for (const auto& m : members) z.push_back(m.z);
  return z;
}

RolloutPool sample_pool(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                        const MrpoConfig& cfg, Rng& rng) {
  if (cfg.n < 1 || cfg.k < 1) throw Error(ErrorCode::kInvalidArgument, "n and k must be >= 1");
  const std::size_t size = cfg.k * cfg.n;
  RolloutPool pool;
  pool.task = task;
  pool.k = cfg.k;
  pool.n = cfg.n;
  pool.snapshot_id = policy.snapshot_id();
  pool.members.resize(size);

  std::vector<std::uint64_t> seeds(size);
  for (auto& s : seeds) s = rng.next_u64();
  const OutcomeJudge& judge = cfg.judge;
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng local(seeds[i]);
      Member& m = pool.members[i];
      m.trajectory = policy.sample(task, device, local);
      m.z = judge ? judge(m.trajectory) : checkpoint_outcome(m.trajectory);
      m.pool_index = i;
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, size);
  if (jobs == 1) {
    run(0, size);
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (size + jobs - 1) / jobs;
    for (std::size_t begin = 0; begin < size; begin += chunk)
      workers.emplace_back(run, begin, std::min(size, begin + chunk));
    for (auto& w : workers) w.join();
  }
  return pool;
}

std::vector<std::size_t> uniform_subsample(std::size_t pool_size, std::size_t n, Rng& rng) {
  if (n > pool_size) throw Error(ErrorCode::kInvalidArgument, "subsample larger than pool");
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.uniform_index(pool_size - i)]);
  idx.resize(n);
  return idx;
}

namespace {

RolloutGroup group_from(const RolloutPool& pool, const std::vector<std::size_t>& indices, Provenance provenance) {
  RolloutGroup group;
  group.provenance = provenance;
  group.snapshot_id = pool.snapshot_id;
  group.subsample = indices;
  for (std::size_t i : indices) group.members.push_back(pool.members[i]);
  return group;
}

}  // namespace

RolloutGroup swap1(const RolloutPool& pool, const std::vector<std::size_t>& subsample, Rng& rng) {
  if (subsample.empty()) throw Error(ErrorCode::kInvalidArgument, "empty subsample");
  const int collapsed_to = pool.members.at(subsample.front()).z;
  std::vector<std::size_t> opposite;
  for (const auto& m : pool.members)
    if (m.z != collapsed_to) opposite.push_back(m.pool_index);
  if (opposite.empty()) throw Error(ErrorCode::kInvalidArgument, "Swap1 needs a diverse pool");

  const std::size_t slot = rng.uniform_index(subsample.size());
  const std::size_t incoming = opposite[rng.uniform_index(opposite.size())];
  std::vector<std::size_t> indices = subsample;
  indices[slot] = incoming;
  RolloutGroup group = group_from(pool, indices, Provenance::kSwapped);
  group.subsample = subsample;
  group.swapped_slot = slot;
  return group;
}

RolloutGroup assemble_group(const RolloutPool& pool, Rng& rng) {
  const auto sub = uniform_subsample(pool.members.size(), pool.n, rng);
  std::vector<int> z;
  z.reserve(sub.size());
  for (std::size_t i : sub) z.push_back(pool.members[i].z);
  if (!is_collapsed(z)) return group_from(pool, sub, Provenance::kPlainSubsample);
  if (pool.diverse()) return swap1(pool, sub, rng);
  RolloutGroup empty;
  empty.provenance = Provenance::kEmpty;
  empty.snapshot_id = pool.snapshot_id;
  empty.subsample = sub;
  return empty;
}

RolloutGroup build_group(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                         const MrpoConfig& cfg, Rng& rng) {
  if (cfg.n < 2) throw Error(ErrorCode::kInvalidArgument, "group size must be >= 2");
  const RolloutPool pool = sample_pool(policy, task, device, cfg, rng);
  return assemble_group(pool, rng);
}

namespace {

MeanEstimate finish(double sum, double sum_sq, std::size_t trials) {
  MeanEstimate est;
  est.trials = trials;
  est.mean = sum / static_cast<double>(trials);
  if (trials > 1) {
    const double var = (sum_sq - sum * est.mean) / static_cast<double>(trials - 1);
    est.standard_error = std::sqrt(std::max(0.0, var) / static_cast<double>(trials));
  }
  return est;
}

}  // namespace

MeanEstimate subsample_statistic_mean(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                                      const MrpoConfig& cfg, const TrajectoryStatistic& f,
                                      std::size_t trials, Rng& rng) {
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const RolloutPool pool = sample_pool(policy, task, device, cfg, rng);
    const auto sub = uniform_subsample(pool.members.size(), cfg.n, rng);
    double group_sum = 0.0;
    for (std::size_t i : sub) group_sum += f(pool.members[i].trajectory);
    const double x = group_sum / static_cast<double>(cfg.n);
    sum += x;
    sum_sq += x * x;
  }
  return finish(sum, sum_sq, trials);
}

MeanEstimate direct_statistic_mean(const Policy& policy, const ComposedTask& task, DeviceFamily device,
                                   const TrajectoryStatistic& f, std::size_t trials, Rng& rng) {
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng local(rng.next_u64());
    const double x = f(policy.sample(task, device, local));
    sum += x;
    sum_sq += x * x;
  }
  return finish(sum, sum_sq, trials);
}

std::vector<double> compute_advantages(std::span<const int> outcomes) {
  if (outcomes.empty() || is_collapsed(outcomes))
    throw Error(ErrorCode::kCollapsedGroup, "advantages need a non-empty, non-collapsed group");
  const double n = static_cast<double>(outcomes.size());
  double mean = 0.0;
  for (int z : outcomes) mean += z;
  mean /= n;
  double var = 0.0;
  for (int z : outcomes) var += (z - mean) * (z - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> adv;
  adv.reserve(outcomes.size());
  for (int z : outcomes) adv.push_back((z - mean) / (std_dev + kAdvantageEpsilon));
  return adv;
}

std::vector<double> compute_advantages(const RolloutGroup& group) {
  if (group.empty()) throw Error(ErrorCode::kCollapsedGroup, "empty group");
  const auto z = group.outcomes();
  return compute_advantages(std::span<const int>(z));
}

bool DiversitySimulation::within(double sigmas) const {
  return std::abs(empirical - closed_form) <= sigmas * standard_error;
}

DiversitySimulation simulate_diversity(double p, std::size_t k, std::size_t n, std::size_t trials, Rng& rng) {
  const std::size_t kn = k * n;
  DiversitySimulation sim;
  sim.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t successes = 0;
    for (std::size_t i = 0; i < kn; ++i) successes += rng.bernoulli(p) ? 1 : 0;
    if (successes > 0 && successes < kn) ++sim.diverse;
  }
  sim.empirical = static_cast<double>(sim.diverse) / static_cast<double>(trials);
  sim.closed_form = diversity_probability(p, k, n);
  sim.standard_error = std::sqrt(sim.closed_form * (1.0 - sim.closed_form) / static_cast<double>(trials));
  return sim;
}

std::string dump_group(const std::string& task_id, const RolloutGroup& group) {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["snapshot_id"] = group.snapshot_id;
  j["outcomes"] = group.outcomes();
  j["advantages"] = group.empty() ? std::vector<double>{} : compute_advantages(group);
  j["provenance"] = to_string(group.provenance);
  return j.dump();
}

}  // namespace flywheel::mrpo
