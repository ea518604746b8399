#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umap/rng.hpp"
#include "umap/timeflow.hpp"
#include "umap/vec3.hpp"

namespace umap {

enum class AgentKind : std::uint8_t {
  LaserCar,
  MissileCar,
  SupportDrone,
  Mushroom,
  Robot,
  GroundNavigator,
  AirNavigator,
  GroundKeeper,
};
inline constexpr std::size_t kAgentKindCount = 8;

enum class EntityKind : std::uint8_t { Flag, Landmark, Monster, Obstacle };
inline constexpr std::size_t kEntityKindCount = 4;

std::string_view to_string(AgentKind kind);
std::string_view to_string(EntityKind kind);
// Accepts snake_case names ("laser_car") and table spellings ("Laser-Car").
AgentKind agent_kind_from_string(std::string_view name);

// Air units fly on a fixed plane; ground units stay at z = 0.
inline constexpr double kAirAltitude = 500.0;

// Per-kind scalars exposed at the task construction interface.
struct KindParams {
  double attack_power = 0.0;
  double attack_range = 0.0;
  double observation_range = 0.0;
  double support_range = 0.0;
  bool operator==(const KindParams&) const = default;
};

struct AgentState {
  std::int32_t agent_id = 0;
  std::int32_t team_id = 0;
  AgentKind kind = AgentKind::LaserCar;
  Vec3 position;
  Vec3 velocity;
  Vec3 heading{1.0, 0.0, 0.0};
  double hp = 0.0;
  double max_hp = 1.0;
  double max_speed = 0.0;
  bool alive = true;
  bool airborne = false;
  KindParams params;

  // Decision latch, written once per decision step by action decoding.
  std::int32_t action = 0;
  Vec3 command;
  std::int32_t target_id = -1;
  // Metal Clash micro-management switch: may the agent chase out-of-range foes.
  bool pursue = true;
  // Navigation Game displacement: forced velocity for the remaining frames.
  Vec3 forced_velocity;
  std::int64_t forced_frames = 0;
  // Navigation Game: consecutive frames spent over a landmark.
  std::int64_t hold_frames = 0;

  bool operator==(const AgentState&) const = default;
};

struct EntityState {
  std::int32_t entity_id = 0;
  EntityKind kind = EntityKind::Landmark;
  Vec3 position;
  Vec3 extent;
  double hp = 0.0;
  double max_hp = 0.0;
  std::int32_t holder_id = -1;
  std::int32_t holder_team = -1;
  bool active = true;
  bool operator==(const EntityState&) const = default;
};

enum class EventKind : std::uint8_t {
  AgentDestroyed,
  EpisodeEnded,
  FlagPickedUp,
  FlagDropped,
  LandmarkHoldCompleted,
  MonsterKilled,
  AttackLanded,
  HealApplied,
};
std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view name);

struct Event {
  EventKind kind = EventKind::EpisodeEnded;
  std::int64_t frame_index = 0;
  std::int32_t subject_id = -1;
  std::optional<std::int32_t> object_id;
  std::optional<double> magnitude;
  bool operator==(const Event&) const = default;
};

// Result of an episode from the scenario's win rule.
inline constexpr std::int32_t kOutcomePending = -2;
inline constexpr std::int32_t kOutcomeTie = -1;

// The complete global state: agents plus entities plus clock and PRNG.
struct WorldState {
  SimClock clock;
  std::vector<AgentState> agents;
  std::vector<EntityState> entities;
  Rng rng;
  std::int32_t episode_step = 0;
  bool done = false;
  std::vector<Event> pending_events;
  // Per-team scenario counters (Flag Capture hold steps).
  std::vector<std::int64_t> team_counters;
  std::int32_t num_teams = 0;
  std::int32_t winner = kOutcomePending;

  bool operator==(const WorldState&) const = default;

  const AgentState* find_agent(std::int32_t id) const;
  AgentState* find_agent(std::int32_t id);
  std::vector<std::int32_t> team_members(std::int32_t team) const;
};

// Appends an event stamped with the current frame.
void emit_event(WorldState& world, EventKind kind, std::int32_t subject,
                std::optional<std::int32_t> object = std::nullopt,
                std::optional<double> magnitude = std::nullopt);

// Restores (frame, subject id) order on events emitted since `first`.
void order_events(std::vector<Event>& events, std::size_t first);

// First-order kinematics: velocity follows the command clamped to max_speed,
// altitude pinned to the agent's plane.
AgentState integrate_kinematics(AgentState agent, const Vec3& commanded_velocity, double dt);

// Sum over steps of gamma^k times the team's summed per-agent reward.
using RewardMap = std::map<std::int32_t, double>;
double discounted_team_return(std::span<const RewardMap> trace,
                              std::span<const std::int32_t> team, double gamma);

// Order-sensitive FNV-1a digest over quantized per-step world snapshots.
// Each absorbed step contributes frame_index, every agent's id, position and
// hp at 1e-6 u resolution plus its alive flag, and every event of the step.
class TrajectoryHasher {
 public:
  static constexpr std::uint64_t kEmptyDigest = 0xcbf29ce484222325ULL;  // FNV-1a offset basis

  void absorb(const WorldState& world, std::span<const Event> events);
  std::uint64_t digest() const { return state_; }

 private:
  void absorb_word(std::uint64_t word);
  std::uint64_t state_ = kEmptyDigest;
};

std::uint64_t trajectory_hash(std::span<const WorldState> snapshots,
                              std::span<const std::vector<Event>> events);
std::string digest_hex(std::uint64_t digest);

// Per-kind recycling of agent and entity objects across episodes. Objects of
// a finished episode go back to the free lists; the next reset draws from
// them and only constructs when a free list is empty.
class ObjectPool {
 public:
  struct KindStats {
    std::size_t live = 0;
    std::size_t free = 0;
    std::size_t high_water = 0;  // objects ever constructed
  };

  AgentState acquire_agent(AgentKind kind);
  EntityState acquire_entity(EntityKind kind);
  void release_all(WorldState& world);

  KindStats agent_stats(AgentKind kind) const;
  KindStats entity_stats(EntityKind kind) const;
  std::size_t total_high_water() const;
  std::size_t total_live() const;

 private:
  std::array<std::vector<AgentState>, kAgentKindCount> agent_free_;
  std::array<KindStats, kAgentKindCount> agent_stats_{};
  std::array<std::vector<EntityState>, kEntityKindCount> entity_free_;
  std::array<KindStats, kEntityKindCount> entity_stats_{};
};

class ActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace umap
