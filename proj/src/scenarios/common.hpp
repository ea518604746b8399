#pragma once

#include <cstdint>
#include <limits>

#include "umap/scenario.hpp"

namespace umap::detail {

// N/E/S/W unit vectors for action indices 1..4.
inline Vec3 compass(int move_action) {
  switch (move_action) {
    case 1: return {0.0, 1.0, 0.0};
    case 2: return {1.0, 0.0, 0.0};
    case 3: return {0.0, -1.0, 0.0};
    case 4: return {-1.0, 0.0, 0.0};
    default: return {};
  }
}

// Index of the nearest agent (by squared distance, ties by id) that `observer`
// perceives and that satisfies `accept`; -1 when none.
template <typename Pred>
int nearest_perceived(const WorldState& world, const PerceptionMatrix& matrix, std::size_t observer,
                      Pred accept) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const Vec3& from = world.agents[observer].position;
  for (std::size_t j = 0; j < world.agents.size(); ++j) {
    if (j == observer || !matrix(observer, j)) continue;
    const auto& other = world.agents[j];
    if (!other.alive || !accept(other)) continue;
    const double d = distance_sq(from, other.position);
    if (d < best_d || (d == best_d && best >= 0 && other.agent_id < world.agents[best].agent_id)) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

inline RewardMap zero_rewards(const WorldState& world) {
  RewardMap r;
  for (const auto& a : world.agents) r[a.agent_id] = 0.0;
  return r;
}

// Team-level reward broadcast identically to every member of the team.
inline void add_to_team(RewardMap& rewards, const WorldState& world, std::int32_t team,
                        double value) {
  for (const auto& a : world.agents) {
    if (a.team_id == team) rewards[a.agent_id] += value;
  }
}

inline bool team_alive(const WorldState& world, std::int32_t team) {
  for (const auto& a : world.agents) {
    if (a.team_id == team && a.alive) return true;
  }
  return false;
}

// Entity ids live in their own range so events never confuse them with agents.
inline constexpr std::int32_t kEntityIdBase = 10000;

inline EntityState& add_entity(WorldState& world, ObjectPool& pool, EntityKind kind,
                               const Vec3& position, const Vec3& extent) {
  EntityState e = pool.acquire_entity(kind);
  e.entity_id = kEntityIdBase + static_cast<std::int32_t>(world.entities.size());
  e.position = position;
  e.extent = extent;
  e.active = true;
  world.entities.push_back(e);
  return world.entities.back();
}

inline void add_obstacles(WorldState& world, ObjectPool& pool, const MapSpec& map) {
  for (const auto& box : map.obstacles) add_entity(world, pool, EntityKind::Obstacle, box.center, box.half);
}

}  // namespace umap::detail
