#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "umap/perception.hpp"
#include "umap/scenario.hpp"
#include "umap/timeflow.hpp"
#include "umap/world.hpp"

namespace umap {

// agent id -> action index
using JointAction = std::map<std::int32_t, std::int32_t>;

struct StepOutcome {
  std::vector<Event> events;
  RewardMap rewards;
  bool done = false;
};

// One world: a task instantiated on a map, stepped in decision-step lockstep.
// Between step() calls the world is frozen; nothing advances without actions.
class Simulation {
 public:
  Simulation(TaskSpec task, MapSpec map, TimeConfig time);
  // Looks task and map up in `registry`.
  Simulation(const Registry& registry, std::string_view task_name, TimeConfig time);

  const WorldState& reset(std::uint64_t seed);
  // Throws ActionError if a living agent lacks an action, an action index is
  // out of range, an id is unknown, or the episode is over. The world is left
  // untouched on error.
  StepOutcome step(const JointAction& actions);

  const WorldState& state() const { return world_; }
  const TaskSpec& task() const { return task_; }
  const MapSpec& map() const { return map_; }
  const TimeConfig& time() const { return time_; }
  const Scenario& scenario() const { return *scenario_; }
  const ObjectPool& pool() const { return pool_; }
  std::uint64_t seed() const { return seed_; }

  void set_time(const TimeConfig& time);
  // Pacing is real-time only; it never changes what is simulated.
  void set_pacing(bool enabled) { pacing_ = enabled; }

  const KindProfile& profile(AgentKind kind) const;
  int num_actions(std::int32_t agent_id) const;
  const std::vector<PerceptionShape>& shapes() const { return shapes_; }
  // Perception of the current state (cached until the next step/reset).
  const PerceptionMatrix& perception() const;
  std::vector<double> observation(std::size_t agent_index) const;
  ObservationSpec observation_spec(std::size_t agent_index) const;

  // Running digest of every step since reset (the reset snapshot included).
  std::uint64_t digest() const { return hasher_.digest(); }
  std::int32_t num_teams() const { return static_cast<std::int32_t>(task_.teams.size()); }

 private:
  void validate_actions(const JointAction& actions) const;
  void spawn_agents(Rng& spawn_rng);

  TaskSpec task_;
  MapSpec map_;
  TimeConfig time_;
  std::shared_ptr<const Scenario> scenario_;
  std::map<AgentKind, KindProfile> profiles_;
  WorldState world_;
  ObjectPool pool_;
  std::vector<PerceptionShape> shapes_;
  mutable std::optional<PerceptionMatrix> perception_;
  TrajectoryHasher hasher_;
  std::uint64_t seed_ = 0;
  bool pacing_ = true;
  bool has_reset_ = false;
};

}  // namespace umap
