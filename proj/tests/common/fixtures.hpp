#pragma once

// Shared inputs for unit and acceptance tests.

#include <string>
#include <vector>

#include "oracles.hpp"

#include "flywheel/random.hpp"
#include "flywheel/scheduler.hpp"
#include "flywheel/taskgraph.hpp"
#include "flywheel/virtualenv.hpp"

namespace flywheel::fixture {

inline std::string data_file(const std::string& name) { return std::string(FLYWHEEL_TEST_DATA) + "/" + name; }

// Three-node doc-editor DAG with a text binding, its environment and the
// composed task.
struct DocEditorEpisode {
  taskgraph::TaskDag dag;
  virtualenv::VirtualEnv env;
  taskgraph::ComposedTask task;
};

inline DocEditorEpisode doc_editor_episode(const std::string& text = "milk") {
  const std::string file = data_file("doc_linear_dag.json");
  DocEditorEpisode fx{taskgraph::load_dag(file), virtualenv::default_registry().create("doc-editor"), {}};
  for (auto& p : virtualenv::load_predicates(file)) fx.env.register_predicate(std::move(p));
  taskgraph::TaskPath path{{"open_editor", "write_text", "save_doc"}};
  Rng rng(0);
  fx.task = taskgraph::compose_instruction(path, fx.dag, {{"text", text}}, rng);
  return fx;
}

// ---- checkpoint matrices ----------------------------------------------------

// Chain v1 -> ... -> vK with checkpoint ck on node vk.
inline taskgraph::TaskDag chain_dag(std::size_t K) {
  std::vector<taskgraph::SubtaskNode> nodes;
  std::vector<std::pair<taskgraph::NodeId, taskgraph::NodeId>> edges;
  for (std::size_t k = 1; k <= K; ++k) {
    const std::string id = "v" + std::to_string(k);
    nodes.push_back({id, "do step " + std::to_string(k), k == 1, k == K, "c" + std::to_string(k)});
    if (k > 1) edges.emplace_back("v" + std::to_string(k - 1), id);
  }
  return taskgraph::TaskDag(nodes, edges);
}

inline taskgraph::ComposedTask chain_task(std::size_t K) {
  taskgraph::ComposedTask task;
  for (std::size_t k = 1; k <= K; ++k) {
    task.path.nodes.push_back("v" + std::to_string(k));
    task.checkpoint_ids.push_back("c" + std::to_string(k));
  }
  task.instruction = "do all " + std::to_string(K) + " steps";
  return task;
}

// rows[t][k] is phi_{k+1} at step t+1.
inline trajectory::Trajectory from_matrix(const std::vector<std::vector<int>>& rows, std::size_t K) {
  trajectory::Trajectory traj;
  traj.task = chain_task(K);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    trajectory::Step s;
    s.index = t + 1;
    s.action = virtualenv::Action::key("Wait");
    for (std::size_t k = 0; k < K; ++k) s.predicate_evals["c" + std::to_string(k + 1)] = rows[t][k];
    traj.steps.push_back(std::move(s));
  }
  return traj;
}

inline std::vector<std::vector<int>> random_matrix(Rng& rng, std::size_t T, std::size_t K, double p) {
  std::vector<std::vector<int>> rows(T, std::vector<int>(K));
  for (auto& row : rows)
    for (auto& v : row) v = rng.bernoulli(p) ? 1 : 0;
  return rows;
}

// ---- random bandit problems --------------------------------------------------

struct RandomProblem {
  scheduler::ToyPolicyParams params;
  DeviceFamily device;
  scheduler::BanditCatalog catalog;
  std::vector<scheduler::BatchItem> batch;
  std::vector<oracle::LabelledSample> samples;
};

inline RandomProblem random_problem(Rng& rng) {
  RandomProblem p;
  const std::size_t arms = 2 + rng.uniform_index(3), features = 1 + rng.uniform_index(3);
  p.params = scheduler::ToyPolicyParams(arms, features, 0.1);
  for (double& v : p.params.theta) v = 2.0 * rng.uniform01() - 1.0;
  p.device = kAllDevices[rng.uniform_index(3)];
  const std::size_t groups = 1 + rng.uniform_index(3);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t n = 2 + rng.uniform_index(3);
    std::vector<scheduler::BanditTask> tasks;
    std::vector<std::size_t> chosen;
    std::vector<double> adv;
    for (std::size_t i = 0; i < n; ++i) {
      scheduler::Vector phi(features);
      for (double& v : phi) v = 2.0 * rng.uniform01() - 1.0;
      const std::string id = "g" + std::to_string(g) + "m" + std::to_string(i);
      tasks.push_back(scheduler::make_bandit_task(id, phi, rng.uniform_index(arms)));
      p.catalog.add(tasks.back());
      chosen.push_back(rng.uniform_index(arms));
      adv.push_back(2.0 * rng.uniform01() - 1.0);
      p.samples.push_back({id, phi, chosen.back(), adv.back()});
    }
    p.batch.push_back(oracle::hand_batch_item(tasks, p.device, chosen, adv));
  }
  return p;
}

}  // namespace flywheel::fixture
