#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <memory>
#include <string>
#include <vector>

#include "umap/orchestrator.hpp"
#include "umap/simulation.hpp"

namespace umap::testing {

// Coarse time so whole episodes stay cheap: 0.5 s decisions at 30 fps.
inline TimeConfig coarse(double dilation = TimeConfig::kUnpaced) { return TimeConfig(0.5, 30, dilation); }

// Every living agent takes `action`.
inline JointAction uniform_actions(const WorldState& w, std::int32_t action) {
  JointAction j;
  for (const auto& a : w.agents)
    if (a.alive) j[a.agent_id] = action;
  return j;
}

// A uniformly random legal action for every living agent.
inline JointAction random_actions(const Simulation& sim, Rng& rng) {
  JointAction j;
  for (const auto& a : sim.state().agents)
    if (a.alive) j[a.agent_id] = static_cast<std::int32_t>(rng.below(sim.num_actions(a.agent_id)));
  return j;
}

// Small bounded map with one tight spawn box per entry of `spawns`.
inline MapSpec small_map(const std::string& id, std::vector<Vec3> spawns, Vec3 objective = {}) {
  MapSpec m;
  m.id = id;
  m.bounds = Box{{0, 0, 0}, {3000, 3000, 1000}};
  for (const auto& s : spawns) m.spawn_regions.push_back(Box{s, {20, 20, 0}});
  m.objective = objective;
  return m;
}

inline TaskSpec make_task(const std::string& scenario, std::vector<TeamRoster> teams, const std::string& map_id,
                          std::int32_t max_steps = 50) {
  TaskSpec t;
  t.name = "test_" + scenario;
  t.scenario = scenario;
  t.teams = std::move(teams);
  t.map_id = map_id;
  t.max_episode_steps = max_steps;
  return t;
}

inline std::unique_ptr<Policy> make_builtin_policy(const std::string& id, std::int32_t team, const TaskSpec& task,
                                                   nlohmann::json params = nlohmann::json::object()) {
  PolicyBinding b;
  b.team = team;
  b.key = id;
  b.policy = id;
  b.params = std::move(params);
  return make_policy(b, task);
}

// One policy of the given id per team.
inline std::vector<std::unique_ptr<Policy>> policies_for(const TaskSpec& task, const std::string& id) {
  std::vector<std::unique_ptr<Policy>> out;
  for (std::size_t t = 0; t < task.teams.size(); ++t)
    out.push_back(make_builtin_policy(id, static_cast<std::int32_t>(t), task));
  return out;
}

inline std::vector<Policy*> raw(const std::vector<std::unique_ptr<Policy>>& ps) {
  std::vector<Policy*> out;
  for (const auto& p : ps) out.push_back(p.get());
  return out;
}

}  // namespace umap::testing
