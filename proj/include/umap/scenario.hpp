#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "umap/perception.hpp"
#include "umap/timeflow.hpp"
#include "umap/world.hpp"

namespace umap {

struct TeamRoster {
  std::string name;
  std::vector<std::pair<AgentKind, int>> members;  // spawn order
  bool learnable = true;

  int size() const;
  bool operator==(const TeamRoster&) const = default;
};

// A concrete POMG: roster per team, map, limits and scenario overrides.
struct TaskSpec {
  std::string name;
  std::string scenario;
  std::vector<TeamRoster> teams;
  std::string map_id;
  std::int32_t max_episode_steps = 100;
  std::map<std::string, double> overrides;
  double gamma = 0.99;
  int parallel_envs = 32;

  double override_or(const std::string& key, double fallback) const;
  std::size_t agent_count() const;
  // Throws std::invalid_argument on empty rosters, negative counts, bad limits.
  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

struct MapSpec {
  std::string id;
  Box bounds;
  std::vector<Box> obstacles;
  std::vector<Vec3> landmarks;
  std::vector<Box> spawn_regions;  // one per team slot
  Vec3 objective;                  // flag / monster placement

  void validate() const;
  bool fits(const TaskSpec& task) const { return spawn_regions.size() >= task.teams.size(); }
  bool operator==(const MapSpec&) const = default;
};

// Per-kind defaults a scenario hands to the world when spawning.
struct KindProfile {
  double max_hp = 100.0;
  double max_speed = 0.0;
  bool airborne = false;
  KindParams params;
  PerceptionShape shape = Sphere{1.0};
  ObservationSpec observation;
  int num_actions = 1;
};

struct StepContext {
  const TaskSpec& task;
  const MapSpec& map;
  const TimeConfig& time;
  std::int64_t frame_in_step = 0;  // 1-based once the first frame has advanced
  bool last_frame = false;
};

// Rule family shared by all tasks of a scenario: init, action decoding,
// per-frame interaction rules, termination, win rule and reward function.
class Scenario {
 public:
  virtual ~Scenario() = default;

  virtual std::string_view name() const = 0;
  // Throws std::invalid_argument for kinds the scenario does not support.
  virtual KindProfile profile(AgentKind kind, const TaskSpec& task) const = 0;
  virtual KindSlotFn kind_slot() const = 0;
  virtual bool occlusion() const { return false; }

  // Adds entities and adjusts freshly spawned agents.
  virtual void populate(WorldState& world, ObjectPool& pool, const TaskSpec& task,
                        const MapSpec& map, Rng& rng) const = 0;
  // Converts latched action indices into per-agent commands at the start of a decision step.
  virtual void decode_actions(WorldState& world, const PerceptionMatrix& perception,
                              const StepContext& ctx) const = 0;
  // Commanded velocity for one frame; defaults to the latched command.
  virtual Vec3 frame_command(const WorldState& world, const AgentState& agent,
                             const StepContext& ctx) const;
  // Interaction rules after kinematics; emits events.
  virtual void on_frame(WorldState& world, const StepContext& ctx) const = 0;
  virtual bool terminal(const WorldState& world, const StepContext& ctx) const = 0;
  // Winning team id or kOutcomeTie. Called once when the episode ends.
  virtual std::int32_t decide_winner(const WorldState& world, const StepContext& ctx) const = 0;
  // Per-agent rewards for the step that led from `before` to `after`.
  virtual RewardMap rewards(const WorldState& before, const WorldState& after,
                            std::span<const Event> events, const StepContext& ctx) const = 0;
};

std::shared_ptr<const Scenario> make_scenario(std::string_view name);

// Named scenario constants fixed by the artifact where the source leaves a gap.
namespace rules {
inline constexpr double kKillReward = 0.1;
inline constexpr double kLossPenalty = 0.05;
inline constexpr double kTerminalReward = 1.0;
inline constexpr double kDroneHealPerStep = 1.0;
inline constexpr double kFlagPickupRadius = 200.0;
inline constexpr double kFlagHoldReward = 0.005;
inline constexpr double kInteractionRange = 300.0;
inline constexpr double kLandmarkRadius = 200.0;
inline constexpr double kLandmarkHoldSeconds = 10.0;
inline constexpr double kNavigationRewardScale = 10000.0;
inline constexpr double kMonsterContactRange = 250.0;
inline constexpr double kMonsterDefenseRange = 600.0;
inline constexpr double kMonsterDefenseDamage = 6.0;
inline constexpr double kMushroomCollideDamage = 10.0;
}  // namespace rules

// Action indices shared by the Metal Clash kinds (drones add kHeal).
namespace metal_clash {
enum Action : int {
  kIdle = 0,
  kMoveNorth,
  kMoveEast,
  kMoveSouth,
  kMoveWest,
  kAttackNearest,
  kAttackWeakest,
  kFlee,
  kTogglePursue,
  kHeal,
};
}

namespace monster_crisis {
enum Action : int { kStay = 0, kMoveNorth, kMoveEast, kMoveSouth, kMoveWest, kMaintain, kCollide };
}

namespace navigation_game {
enum Action : int {
  kIdle = 0,
  kMoveNorth,
  kMoveEast,
  kMoveSouth,
  kMoveWest,
  kFlee,
  kTowardLandmark,
  kTowardFoe,
  kTowardAlly,
};
}

// Task and map registry. The built-in table of the 15 example tasks and their
// maps ships as data (data/tasks.json) and is embedded at build time.
class Registry {
 public:
  static const Registry& builtin();
  // Parses {"maps": [...], "tasks": [...]}.
  static Registry from_json_text(std::string_view text);

  void merge_json_text(std::string_view text);
  void load_file(const std::filesystem::path& path);
  void register_task(TaskSpec task);
  void register_map(MapSpec map);

  const TaskSpec& task(std::string_view name) const;
  const MapSpec& map(std::string_view id) const;
  bool has_task(std::string_view name) const;
  bool has_map(std::string_view id) const;
  std::vector<std::string> task_names() const;
  std::vector<std::string> map_ids() const;

 private:
  std::map<std::string, TaskSpec, std::less<>> tasks_;
  std::map<std::string, MapSpec, std::less<>> maps_;
};

// Fraction of episodes won; ties count as non-wins.
double win_rate(std::span<const std::int32_t> outcomes, std::int32_t team);

}  // namespace umap
