#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "flywheel/agentloop.hpp"
#include "flywheel/error.hpp"
#include "flywheel/json_io.hpp"
#include "flywheel/mrpo.hpp"
#include "flywheel/pipeline.hpp"
#include "flywheel/scheduler.hpp"
#include "flywheel/transport.hpp"

namespace flywheel::cli {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::vector<DeviceFamily> parse_devices(const std::string& list) {
  std::vector<DeviceFamily> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_device(item));
  return out;
}

// ---- synth-tasks -----------------------------------------------------------

struct SynthArgs {
  std::string dag;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::size_t max_len = 8;
  std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("synth-tasks", "Sample DAG paths and compose task instructions");
  sub->add_option("--dag", a.dag, "DAG file")->required();
  sub->add_option("--count", a.count, "Number of tasks");
  sub->add_option("--seed", a.seed, "Seed");
  sub->add_option("--max-len", a.max_len, "Maximum path length");
  sub->add_option("--out", a.out, "Output file (stdout when omitted)");
  sub->callback([&] {
    action = [&] {
      const auto dag = taskgraph::load_dag(a.dag);
      const auto report = taskgraph::validate_dag(dag);
      if (!report.ok())
        throw Error(ErrorCode::kInvalidArgument, a.dag + ": " + report.violations.front().message);
      const auto tasks = pipeline::synthesize_tasks(dag, a.count, a.seed, a.max_len);
      std::ofstream file;
      if (!a.out.empty()) file = open_out(a.out);
      std::ostream& sink = a.out.empty() ? out : file;
      for (const auto& t : tasks) sink << json(t).dump() << '\n';
    };
  });
}

// ---- rollout ---------------------------------------------------------------

struct RolloutArgs {
  std::string dag;
  std::string env;
  std::string tasks;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::size_t max_len = 8;
  std::size_t max_steps = 32;
  double fault_rate = 0.0;
  std::string out;
};

void add_rollout(CLI::App& app, RolloutArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("rollout", "Run canonical scripts and write raw trajectory records");
  sub->add_option("--dag", a.dag, "DAG file")->required();
  sub->add_option("--env", a.env, "Environment kind")->required();
  sub->add_option("--tasks", a.tasks, "Task file from synth-tasks (synthesized when omitted)");
  sub->add_option("--count", a.count, "Tasks to synthesize");
  sub->add_option("--seed", a.seed, "Seed");
  sub->add_option("--max-len", a.max_len, "Maximum path length");
  sub->add_option("--max-steps", a.max_steps, "Step budget per rollout");
  sub->add_option("--fault-rate", a.fault_rate, "Probability of cutting a script short")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--out", a.out, "Raw record file")->required();
  sub->callback([&] {
    action = [&] {
      const auto dag = taskgraph::load_dag(a.dag);
      const auto env = pipeline::environment_for(a.env, a.dag);
      std::vector<taskgraph::ComposedTask> tasks;
      if (a.tasks.empty()) {
        tasks = pipeline::synthesize_tasks(dag, a.count, a.seed, a.max_len);
      } else {
        for (const auto& line : read_lines(a.tasks)) {
          try {
            tasks.push_back(json::parse(line).get<taskgraph::ComposedTask>());
          } catch (const json::exception& e) {
            throw Error(ErrorCode::kParseError, e.what());
          }
        }
      }
      std::vector<trajectory::DatasetRecord> records;
      std::size_t failed = 0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        virtualenv::ScenarioSpec scenario;
        scenario.seed = derive_seed(a.seed, "scenario", i);
        try {
          auto script = pipeline::canonical_script(tasks[i], env, scenario);
          Rng fault(derive_seed(a.seed, "fault", i));
          if (script.size() > 1 && fault.bernoulli(a.fault_rate)) {
            const auto keep = fault.uniform_index(script.size() - 1);
            script.erase(script.begin() + static_cast<std::ptrdiff_t>(keep), script.end() - 1);
          }
          records.push_back(
              trajectory::raw_record(pipeline::scripted_rollout(tasks[i], env, scenario, script, a.max_steps)));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kUndecomposableInstruction) throw;
          ++failed;
        }
      }
      trajectory::write_dataset(records, a.out);
      out << "rollouts " << records.size() << " undecomposable " << failed << '\n';
    };
  });
}

// ---- filter ----------------------------------------------------------------

struct FilterArgs {
  std::string dag;
  std::string in;
  std::string out;
  std::uint64_t seed = 0;
};

void add_filter(CLI::App& app, FilterArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("filter", "Classify raw records by checkpoint prefix; keep accepted and partial");
  sub->add_option("--dag", a.dag, "DAG file")->required();
  sub->add_option("--in", a.in, "Raw record file")->required();
  sub->add_option("--out", a.out, "Dataset file")->required();
  sub->add_option("--seed", a.seed, "Seed for instruction repair");
  sub->callback([&] {
    action = [&] {
      const auto dag = taskgraph::load_dag(a.dag);
      const auto raw = trajectory::read_dataset(a.in);
      std::vector<trajectory::DatasetRecord> kept;
      std::size_t accepted = 0, partial = 0, rejected = 0;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        auto record = pipeline::filter_record(raw[i].trajectory, dag, derive_seed(a.seed, "repair", i));
        if (!record) {
          ++rejected;
          continue;
        }
        (record->classification == trajectory::RecordClass::kAccepted ? accepted : partial)++;
        kept.push_back(std::move(*record));
      }
      trajectory::write_dataset(kept, a.out);
      out << "accepted " << accepted << " partial " << partial << " rejected " << rejected << '\n';
    };
  });
}

// ---- mrpo-sim --------------------------------------------------------------

struct MrpoArgs {
  double p = 0.5;
  std::size_t k = 2;
  std::size_t n = 4;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
  std::size_t groups = 0;
  std::string dump;
};

void add_mrpo(CLI::App& app, MrpoArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("mrpo-sim", "Monte-Carlo pool diversity and group construction");
  sub->add_option("--p", a.p, "Per-rollout success probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--k", a.k, "Oversampling factor")->check(CLI::PositiveNumber);
  sub->add_option("--n", a.n, "Group size")->check(CLI::Range(2, 1 << 20));
  sub->add_option("--trials", a.trials, "Monte-Carlo pools")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "Seed");
  sub->add_option("--groups", a.groups, "Groups to build and dump");
  sub->add_option("--dump", a.dump, "Group dump file (stdout when omitted)");
  sub->callback([&] {
    action = [&] {
      Rng rng(derive_seed(a.seed, "mrpo-sim", 0));
      const auto sim = mrpo::simulate_diversity(a.p, a.k, a.n, a.trials, rng);
      const double discard = 1.0 - sim.empirical;
      const double kn = static_cast<double>(a.k * a.n);
      out << json{{"p", a.p},
                  {"k", a.k},
                  {"n", a.n},
                  {"trials", sim.trials},
                  {"diversity_empirical", sim.empirical},
                  {"diversity_closed_form", sim.closed_form},
                  {"standard_error", sim.standard_error},
                  {"discard_rate", discard},
                  {"discard_closed_form", std::pow(a.p, kn) + std::pow(1.0 - a.p, kn)},
                  {"within_3_sigma", sim.within(3.0)}}
                 .dump()
          << '\n';
      if (a.groups == 0) return;
      const mrpo::BernoulliPolicy policy(a.p);
      const auto task = mrpo::simple_task("bernoulli");
      const mrpo::MrpoConfig cfg{a.n, a.k, {}, 1};
      Rng group_rng(derive_seed(a.seed, "mrpo-groups", 0));
      std::ofstream file;
      if (!a.dump.empty()) file = open_out(a.dump);
      std::ostream& sink = a.dump.empty() ? out : file;
      for (std::size_t g = 0; g < a.groups; ++g) {
        const auto group = mrpo::build_group(policy, task, DeviceFamily::kMobile, cfg, group_rng);
        sink << mrpo::dump_group(task.instruction + "#" + std::to_string(g), group) << '\n';
      }
    };
  });
}

// ---- transport-demo --------------------------------------------------------

void add_transport(CLI::App& app, std::uint64_t& seed, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("transport-demo", "Show an aligned id-transported record and a re-tokenized one");
  sub->add_option("--seed", seed, "Seed");
  sub->callback([&] {
    action = [&] {
      const auto fx = transport::ambiguous_fixture();
      const auto split = fx.tokenizer.segmentations("ab");
      Rng rng(derive_seed(seed, "transport-demo", 0));
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const auto record = transport::generate(fx.scorer, fx.tokenizer, fx.prompt, 8, rng);
        const auto retok = transport::retokenized(record, fx.tokenizer);
        if (retok.output_ids == record.output_ids) continue;
        const auto ok = transport::verify_alignment(record, fx.scorer, &fx.tokenizer);
        const auto bad = transport::verify_alignment(retok, fx.scorer);
        out << std::setprecision(12);
        out << "aligned " << transport::serialize(record) << " id_delta " << ok.id_delta << " text_delta "
            << ok.text_delta.value_or(0.0) << '\n';
        out << "mismatched " << transport::serialize(retok) << " id_delta " << bad.id_delta << '\n';
        return;
      }
      throw Error(ErrorCode::kInvalidArgument, "no ambiguous generation found");
    };
  });
}

// ---- train-sim -------------------------------------------------------------

struct TrainArgs {
  std::string schedule = "cyclic";
  std::size_t stages = 30;
  std::string devices = "mobile,desktop,web";
  std::uint64_t seed = 0;
  std::string metrics_out;
  std::size_t n = 4;
  std::size_t k = 2;
  double eta = 0.5;
};

// Three arms; each device rewards a different arm for the same features.
scheduler::TaskSets toy_task_sets(const std::vector<DeviceFamily>& devices) {
  scheduler::TaskSets sets;
  for (DeviceFamily d : devices) {
    const auto target = static_cast<std::size_t>(d);
    sets[d] = {scheduler::make_bandit_task("select-" + std::string(to_string(d)), {1.0, 0.5}, target)};
  }
  return sets;
}

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("train-sim", "Alternating per-device updates of a toy softmax bandit");
  sub->add_option("--schedule", a.schedule, "cyclic | curriculum:<device,...>");
  sub->add_option("--stages", a.stages, "Number of stages");
  sub->add_option("--devices", a.devices, "Comma-separated device families");
  sub->add_option("--seed", a.seed, "Seed");
  sub->add_option("--metrics-out", a.metrics_out, "Per-stage metrics file (stdout when omitted)");
  sub->add_option("--n", a.n, "Group size")->check(CLI::Range(2, 1 << 20));
  sub->add_option("--k", a.k, "Oversampling factor")->check(CLI::PositiveNumber);
  sub->add_option("--eta", a.eta, "Step size");
  sub->callback([&] {
    action = [&] {
      const auto devices = parse_devices(a.devices);
      const auto schedule = scheduler::StageSchedule::parse(a.schedule, devices);
      std::vector<DeviceFamily> trained = devices;
      for (DeviceFamily d : schedule.order())
        if (std::find(trained.begin(), trained.end(), d) == trained.end()) trained.push_back(d);
      const scheduler::TaskSets sets = toy_task_sets(trained);
      const scheduler::ToyPolicyParams params(3, 2, a.eta);
      Rng rng(derive_seed(a.seed, "train-sim", 0));
      const mrpo::MrpoConfig cfg{a.n, a.k, {}, 1};
      const auto result = scheduler::run_alternating(params, schedule, sets, cfg, {a.stages, 1}, rng);
      std::ofstream file;
      if (!a.metrics_out.empty()) file = open_out(a.metrics_out);
      std::ostream& sink = a.metrics_out.empty() ? out : file;
      for (const auto& m : result.stages) sink << scheduler::encode_stage_metrics(m) << '\n';
      for (const auto& [d, tasks] : sets)
        out << "expected_return " << to_string(d) << ' ' << std::setprecision(6)
            << scheduler::expected_return(result.params, d, tasks.front()) << '\n';
    };
  });
}

// ---- run-agent -------------------------------------------------------------

struct AgentArgs {
  std::string dag;
  std::string env;
  std::size_t episodes = 5;
  std::size_t window = 2;
  std::uint64_t seed = 0;
  std::size_t max_steps = 32;
  std::size_t max_len = 8;
  std::string out;
};

void add_agent(CLI::App& app, AgentArgs& a, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("run-agent", "Run the manager/worker/reflector/notetaker loop on synthesized tasks");
  sub->add_option("--dag", a.dag, "DAG file")->required();
  sub->add_option("--env", a.env, "Environment kind")->required();
  sub->add_option("--episodes", a.episodes, "Episodes");
  sub->add_option("--window", a.window, "Context window size")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "Seed");
  sub->add_option("--max-steps", a.max_steps, "Step budget per episode")->check(CLI::PositiveNumber);
  sub->add_option("--max-len", a.max_len, "Maximum path length");
  sub->add_option("--out", a.out, "Dataset file")->required();
  sub->callback([&] {
    action = [&] {
      const auto dag = taskgraph::load_dag(a.dag);
      const auto env = pipeline::environment_for(a.env, a.dag);
      const auto tasks = pipeline::synthesize_tasks(dag, a.episodes, a.seed, a.max_len);
      const auto roles = agentloop::reference_roles();
      agentloop::EpisodeLimits limits;
      limits.max_steps = a.max_steps;
      limits.window = a.window;
      std::map<std::string, std::size_t> terminations;
      std::vector<trajectory::DatasetRecord> records;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        virtualenv::ScenarioSpec scenario;
        scenario.seed = derive_seed(a.seed, "scenario", i);
        const auto episode = agentloop::run_episode(tasks[i], roles, env, scenario, limits);
        ++terminations[std::string(to_string(episode.termination))];
        auto record = pipeline::filter_record(episode.trajectory, dag, derive_seed(a.seed, "repair", i));
        records.push_back(record ? std::move(*record) : trajectory::raw_record(episode.trajectory));
      }
      trajectory::write_dataset(records, a.out);
      for (const auto& [name, count] : terminations) out << name << ' ' << count << '\n';
    };
  });
}

// ---- run -------------------------------------------------------------------

void add_run(CLI::App& app, std::string& config, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("run", "Synthesize, roll out, filter and write datasets from a config file");
  sub->add_option("--config", config, "Pipeline config")->required();
  sub->callback([&] {
    action = [&] {
      const auto cfg = pipeline::load_config(config);
      const auto report = pipeline::run_pipeline(cfg);
      out << pipeline::encode_report(report) << '\n';
      out << "digest " << pipeline::file_digest(cfg.dataset) << '\n';
    };
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GUI agent data flywheel toolkit", "flywheel"};
  app.require_subcommand(1);
  std::function<void()> action;

  SynthArgs synth;
  RolloutArgs rollout;
  FilterArgs filter;
  MrpoArgs mrpo_args;
  std::uint64_t transport_seed = 0;
  TrainArgs train;
  AgentArgs agent;
  std::string config;
  add_synth(app, synth, action, out);
  add_rollout(app, rollout, action, out);
  add_filter(app, filter, action, out);
  add_mrpo(app, mrpo_args, action, out);
  add_transport(app, transport_seed, action, out);
  add_train(app, train, action, out);
  add_agent(app, agent, action, out);
  add_run(app, config, action, out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (action) action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace flywheel::cli
