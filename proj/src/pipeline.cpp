#include "flywheel/pipeline.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "flywheel/agentloop.hpp"
#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "json.hpp"

namespace flywheel::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).lexically_normal().string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::string& base_dir) {
  PipelineConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.jobs = j.value("jobs", std::size_t{1});
    for (const auto& d : j.value("dags", json::array())) {
      DagSource src;
      src.file = resolve(base_dir, d.at("file").get<std::string>());
      src.env = d.at("env").get<std::string>();
      src.tasks = d.value("tasks", std::size_t{1});
      if (!fs::exists(src.file)) throw Error(ErrorCode::kConfigError, "DAG file not found: " + src.file);
      cfg.dags.push_back(std::move(src));
    }
    cfg.scenario_seeds = j.value("scenario_seeds", std::vector<std::uint64_t>{});
    if (j.contains("rollout")) {
      const auto& r = j.at("rollout");
      cfg.rollout.max_steps = r.value("max_steps", cfg.rollout.max_steps);
      cfg.rollout.max_path_length = r.value("max_path_length", cfg.rollout.max_path_length);
      cfg.rollout.fault_rate = r.value("fault_rate", cfg.rollout.fault_rate);
    }
    if (j.contains("mrpo")) {
      cfg.mrpo_n = j.at("mrpo").value("n", cfg.mrpo_n);
      cfg.mrpo_k = j.at("mrpo").value("k", cfg.mrpo_k);
    }
    cfg.schedule = j.value("schedule", cfg.schedule);
    const auto out = j.value("output", json::object());
    cfg.dataset = resolve(base_dir, out.value("dataset", std::string("dataset.jsonl")));
    if (out.contains("raw")) cfg.raw_out = resolve(base_dir, out.at("raw").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  if (cfg.rollout.fault_rate < 0.0 || cfg.rollout.fault_rate > 1.0)
    throw Error(ErrorCode::kConfigError, "rollout.fault_rate must lie in [0, 1]");
  if (cfg.rollout.max_steps == 0 || cfg.rollout.max_path_length == 0)
    throw Error(ErrorCode::kConfigError, "rollout limits must be positive");
  if (cfg.jobs == 0) cfg.jobs = 1;
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.detail());
  }
  PipelineConfig cfg = parse_config(text, fs::path(path).parent_path().string());
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfigError, std::string(kSeedEnvVar) + " is not an unsigned integer");
    }
  }
  return cfg;
}

std::string encode_report(const PipelineReport& r) {
  return json{{"tasks_synthesized", r.tasks_synthesized}, {"accepted", r.accepted},
              {"partial", r.partial},                     {"rejected", r.rejected},
              {"errors", r.errors},                       {"records_written", r.records_written}}
      .dump();
}

std::vector<taskgraph::ComposedTask> synthesize_tasks(const taskgraph::TaskDag& dag, std::size_t count,
                                                      std::uint64_t seed, std::size_t max_path_length) {
  std::vector<taskgraph::ComposedTask> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "synth", i));
    const auto path = taskgraph::sample_path(dag, rng, max_path_length);
    const auto bindings = taskgraph::sample_bindings(path, dag, dag.entities, rng);
    tasks.push_back(taskgraph::compose_instruction(path, dag, bindings, rng));
  }
  return tasks;
}

virtualenv::VirtualEnv environment_for(const std::string& kind, const std::string& dag_file) {
  virtualenv::VirtualEnv env = virtualenv::default_registry().create(kind);
  for (auto& p : virtualenv::load_predicates(dag_file)) env.register_predicate(std::move(p));
  return env;
}

std::vector<virtualenv::Action> canonical_script(const taskgraph::ComposedTask& task,
                                                 const virtualenv::VirtualEnv& env,
                                                 const virtualenv::ScenarioSpec& scenario,
                                                 std::optional<std::size_t> keep) {
  const auto state = env.reset(scenario).first;
  const virtualenv::RuleBasedDecomposer decomposer;
  auto script = virtualenv::decompose_instruction(task.instruction, env, state, decomposer);
  if (keep && *keep < script.size()) script.resize(*keep);
  script.push_back(virtualenv::Action::terminate());
  return script;
}

trajectory::Trajectory scripted_rollout(const taskgraph::ComposedTask& task, const virtualenv::VirtualEnv& env,
                                        const virtualenv::ScenarioSpec& scenario,
                                        const std::vector<virtualenv::Action>& script, std::size_t max_steps) {
  const virtualenv::VirtualEnv bound = agentloop::bind_task(env, task);
  return virtualenv::rollout_scripted(bound, scenario, virtualenv::ScriptedPolicy::sequence(script), {}, max_steps,
                                      task);
}

std::optional<trajectory::DatasetRecord> filter_record(const trajectory::Trajectory& traj,
                                                       const taskgraph::TaskDag& dag, std::uint64_t compose_seed) {
  const auto c = trajectory::truncate_and_repair(traj, dag, {}, compose_seed);
  if (const auto* a = std::get_if<trajectory::Accepted>(&c)) return trajectory::to_record(*a);
  if (const auto* p = std::get_if<trajectory::Partial>(&c)) return trajectory::to_record(*p);
  return std::nullopt;
}

namespace {

struct TaskJob {
  std::size_t index = 0;
  std::size_t source = 0;
  taskgraph::ComposedTask task;
};

struct TaskOutcome {
  std::optional<trajectory::Trajectory> raw;
  std::optional<trajectory::DatasetRecord> record;
  bool error = false;
};

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  return out;
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config) {
  std::vector<taskgraph::TaskDag> dags;
  std::vector<virtualenv::VirtualEnv> envs;
  std::vector<TaskJob> jobs;
  for (std::size_t s = 0; s < config.dags.size(); ++s) {
    const auto& src = config.dags[s];
    dags.push_back(taskgraph::load_dag(src.file));
    try {
      envs.push_back(environment_for(src.env, src.file));
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfigError, e.what());
    }
    for (std::size_t i = 0; i < src.tasks; ++i) jobs.push_back({jobs.size(), s, {}});
  }

  std::vector<TaskOutcome> outcomes(jobs.size());
  auto run_one = [&](TaskJob& job) {
    TaskOutcome& out = outcomes[job.index];
    try {
      Rng synth(derive_seed(config.seed, "synth", job.index));
      const auto& dag = dags[job.source];
      const auto path = taskgraph::sample_path(dag, synth, config.rollout.max_path_length);
      const auto bindings = taskgraph::sample_bindings(path, dag, dag.entities, synth);
      job.task = taskgraph::compose_instruction(path, dag, bindings, synth);

      virtualenv::ScenarioSpec scenario;
      scenario.seed = config.scenario_seeds.empty()
                          ? derive_seed(config.seed, "scenario", job.index)
                          : config.scenario_seeds[job.index % config.scenario_seeds.size()];

      std::optional<std::size_t> keep;
      auto script = canonical_script(job.task, envs[job.source], scenario);
      Rng fault(derive_seed(config.seed, "fault", job.index));
      const std::size_t work = script.size() - 1;  // without terminate
      if (work > 0 && fault.bernoulli(config.rollout.fault_rate)) {
        keep = fault.uniform_index(work);
        script.erase(script.begin() + static_cast<std::ptrdiff_t>(*keep), script.end() - 1);
      }
      out.raw = scripted_rollout(job.task, envs[job.source], scenario, script, config.rollout.max_steps);
      out.record = filter_record(*out.raw, dag, derive_seed(config.seed, "repair", job.index));
    } catch (const Error&) {
      out.error = true;
    }
  };

  const std::size_t workers = std::min(config.jobs, std::max<std::size_t>(1, jobs.size()));
  if (workers <= 1) {
    for (auto& job : jobs) run_one(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) run_one(jobs[i]);
      });
    for (auto& t : pool) t.join();
  }

  PipelineReport report;
  report.tasks_synthesized = jobs.size();
  std::ofstream dataset = open_output(config.dataset);
  std::optional<std::ofstream> raw;
  if (config.raw_out) raw = open_output(*config.raw_out);
  for (const auto& out : outcomes) {
    if (out.error) {
      ++report.errors;
      continue;
    }
    if (raw) *raw << trajectory::encode_record(trajectory::raw_record(*out.raw)) << '\n';
    if (!out.record) {
      ++report.rejected;
      continue;
    }
    if (out.record->classification == trajectory::RecordClass::kAccepted)
      ++report.accepted;
    else
      ++report.partial;
    dataset << trajectory::encode_record(*out.record) << '\n';
    ++report.records_written;
  }
  dataset.flush();
  if (!dataset || (raw && !raw->flush())) throw Error(ErrorCode::kIoFailure, "dataset write failed");
  return report;
}

std::string file_digest(const std::string& path) {
  const std::string bytes = read_file(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::kIoFailure, "digest failed for " + path);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

}  // namespace flywheel::pipeline
