#include "umap/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace umap {

namespace {

constexpr std::array<std::string_view, kAgentKindCount> kAgentKindNames = {
    "laser_car",        "missile_car",   "support_drone",   "mushroom",
    "robot",            "ground_navigator", "air_navigator", "ground_keeper",
};

constexpr std::array<std::string_view, kEntityKindCount> kEntityKindNames = {
    "flag", "landmark", "monster", "obstacle"};

constexpr std::array<std::string_view, 8> kEventKindNames = {
    "AgentDestroyed", "EpisodeEnded",  "FlagPickedUp", "FlagDropped",
    "LandmarkHoldCompleted", "MonsterKilled", "AttackLanded", "HealApplied"};

std::string normalize_kind_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == '-' || c == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::int64_t quantize(double value) { return std::llround(value * 1e6); }

}  // namespace

std::string_view to_string(AgentKind kind) { return kAgentKindNames[static_cast<std::size_t>(kind)]; }

std::string_view to_string(EntityKind kind) {
  return kEntityKindNames[static_cast<std::size_t>(kind)];
}

AgentKind agent_kind_from_string(std::string_view name) {
  const std::string key = normalize_kind_name(name);
  for (std::size_t i = 0; i < kAgentKindNames.size(); ++i) {
    if (kAgentKindNames[i] == key) return static_cast<AgentKind>(i);
  }
  throw std::invalid_argument("unknown agent kind '" + std::string(name) + "'");
}

std::string_view to_string(EventKind kind) { return kEventKindNames[static_cast<std::size_t>(kind)]; }

EventKind event_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kEventKindNames.size(); ++i) {
    if (kEventKindNames[i] == name) return static_cast<EventKind>(i);
  }
  throw std::invalid_argument("unknown event kind '" + std::string(name) + "'");
}

const AgentState* WorldState::find_agent(std::int32_t id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < agents.size() && agents[id].agent_id == id)
    return &agents[id];
  for (const auto& a : agents) {
    if (a.agent_id == id) return &a;
  }
  return nullptr;
}

AgentState* WorldState::find_agent(std::int32_t id) {
  return const_cast<AgentState*>(std::as_const(*this).find_agent(id));
}

std::vector<std::int32_t> WorldState::team_members(std::int32_t team) const {
  std::vector<std::int32_t> ids;
  for (const auto& a : agents) {
    if (a.team_id == team) ids.push_back(a.agent_id);
  }
  return ids;
}

void emit_event(WorldState& world, EventKind kind, std::int32_t subject,
                std::optional<std::int32_t> object, std::optional<double> magnitude) {
  world.pending_events.push_back(
      Event{kind, world.clock.frame_index, subject, object, magnitude});
}

void order_events(std::vector<Event>& events, std::size_t first) {
  std::stable_sort(events.begin() + static_cast<std::ptrdiff_t>(first), events.end(),
                   [](const Event& a, const Event& b) {
                     if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
                     return a.subject_id < b.subject_id;
                   });
}

AgentState integrate_kinematics(AgentState agent, const Vec3& commanded_velocity, double dt) {
  Vec3 v{commanded_velocity.x, commanded_velocity.y, 0.0};
  const double speed = norm(v);
  if (speed > agent.max_speed) v = v * (agent.max_speed / speed);
  agent.velocity = v;
  agent.position += v * dt;
  agent.position.z = agent.airborne ? kAirAltitude : 0.0;
  const double moved = norm(v);
  if (moved > 0.0) agent.heading = v * (1.0 / moved);
  return agent;
}

double discounted_team_return(std::span<const RewardMap> trace,
                              std::span<const std::int32_t> team, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  double total = 0.0;
  double discount = 1.0;
  for (const auto& step : trace) {
    double team_sum = 0.0;
    for (std::int32_t id : team) {
      if (auto it = step.find(id); it != step.end()) team_sum += it->second;
    }
    total += discount * team_sum;
    discount *= gamma;
  }
  return total;
}

void TrajectoryHasher::absorb_word(std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (word >> (8 * i)) & 0xffU;
    state_ *= 0x100000001b3ULL;
  }
}

void TrajectoryHasher::absorb(const WorldState& world, std::span<const Event> events) {
  absorb_word(static_cast<std::uint64_t>(world.clock.frame_index));
  for (const auto& a : world.agents) {
    absorb_word(static_cast<std::uint64_t>(a.agent_id));
    absorb_word(static_cast<std::uint64_t>(quantize(a.position.x)));
    absorb_word(static_cast<std::uint64_t>(quantize(a.position.y)));
    absorb_word(static_cast<std::uint64_t>(quantize(a.position.z)));
    absorb_word(static_cast<std::uint64_t>(quantize(a.hp)));
    absorb_word(a.alive ? 1U : 0U);
  }
  for (const auto& e : events) {
    absorb_word(static_cast<std::uint64_t>(e.kind));
    absorb_word(static_cast<std::uint64_t>(e.frame_index));
    absorb_word(static_cast<std::uint64_t>(e.subject_id));
    absorb_word(e.object_id ? static_cast<std::uint64_t>(*e.object_id) : ~0ULL);
    absorb_word(e.magnitude ? static_cast<std::uint64_t>(quantize(*e.magnitude)) : ~0ULL);
  }
}

std::uint64_t trajectory_hash(std::span<const WorldState> snapshots,
                              std::span<const std::vector<Event>> events) {
  TrajectoryHasher hasher;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    static const std::vector<Event> kNone;
    hasher.absorb(snapshots[i], i < events.size() ? std::span<const Event>(events[i])
                                                  : std::span<const Event>(kNone));
  }
  return hasher.digest();
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

AgentState ObjectPool::acquire_agent(AgentKind kind) {
  const auto k = static_cast<std::size_t>(kind);
  auto& stats = agent_stats_[k];
  // Recycled objects are reinitialized in place; fresh ones count toward the high-water mark.
  AgentState obj;
  if (auto& free = agent_free_[k]; !free.empty()) {
    obj = std::move(free.back());
    free.pop_back();
    obj = AgentState{};
  } else {
    ++stats.high_water;
  }
  ++stats.live;
  stats.free = agent_free_[k].size();
  obj.kind = kind;
  return obj;
}

EntityState ObjectPool::acquire_entity(EntityKind kind) {
  const auto k = static_cast<std::size_t>(kind);
  auto& stats = entity_stats_[k];
  // Recycled objects are reinitialized in place; fresh ones count toward the high-water mark.
  EntityState obj;
  if (auto& free = entity_free_[k]; !free.empty()) {
    obj = std::move(free.back());
    free.pop_back();
    obj = EntityState{};
  } else {
    ++stats.high_water;
  }
  ++stats.live;
  stats.free = entity_free_[k].size();
  obj.kind = kind;
  return obj;
}

void ObjectPool::release_all(WorldState& world) {
  for (auto& a : world.agents) {
    const auto k = static_cast<std::size_t>(a.kind);
    agent_free_[k].push_back(a);
    --agent_stats_[k].live;
    agent_stats_[k].free = agent_free_[k].size();
  }
  for (auto& e : world.entities) {
    const auto k = static_cast<std::size_t>(e.kind);
    entity_free_[k].push_back(e);
    --entity_stats_[k].live;
    entity_stats_[k].free = entity_free_[k].size();
  }
  // clear() keeps capacity, so the containers themselves are recycled too.
  world.agents.clear();
  world.entities.clear();
  world.pending_events.clear();
}

ObjectPool::KindStats ObjectPool::agent_stats(AgentKind kind) const {
  return agent_stats_[static_cast<std::size_t>(kind)];
}

ObjectPool::KindStats ObjectPool::entity_stats(EntityKind kind) const {
  return entity_stats_[static_cast<std::size_t>(kind)];
}

std::size_t ObjectPool::total_high_water() const {
  std::size_t total = 0;
  for (const auto& s : agent_stats_) total += s.high_water;
  for (const auto& s : entity_stats_) total += s.high_water;
  return total;
}

std::size_t ObjectPool::total_live() const {
  std::size_t total = 0;
  for (const auto& s : agent_stats_) total += s.live;
  for (const auto& s : entity_stats_) total += s.live;
  return total;
}

}  // namespace umap
