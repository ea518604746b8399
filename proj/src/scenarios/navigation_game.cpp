// Navigation Game: navigators try to park an air unit over a landmark while
// ground keepers chase them off. Obstacles block sight.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "common.hpp"

namespace umap {

namespace {

using namespace navigation_game;

int slot_of(AgentKind kind) {
  switch (kind) {
    case AgentKind::GroundNavigator: return 0;
    case AgentKind::AirNavigator: return 1;
    default: return 2;
  }
}

bool is_navigator(AgentKind kind) {
  return kind == AgentKind::GroundNavigator || kind == AgentKind::AirNavigator;
}

// Team ids of the navigator and keeper sides, taken from their rosters.
std::pair<std::int32_t, std::int32_t> roles(const WorldState& world) {
  std::int32_t nav = -1, keep = -1;
  for (const auto& a : world.agents) {
    if (is_navigator(a.kind)) {
      if (nav < 0) nav = a.team_id;
    } else if (keep < 0) {
      keep = a.team_id;
    }
  }
  return {nav, keep};
}

// Nearest landmark in the plane, ties by entity order.
const EntityState* nearest_landmark(const WorldState& world, const Vec3& from) {
  const EntityState* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : world.entities) {
    if (e.kind != EntityKind::Landmark) continue;
    const double d = planar_distance(from, e.position);
    if (d < best_d) {
      best = &e;
      best_d = d;
    }
  }
  return best;
}

std::int64_t hold_frames_needed(const TimeConfig& time) {
  return std::llround(rules::kLandmarkHoldSeconds * time.baseline_frame_rate());
}

class NavigationGame final : public Scenario {
 public:
  std::string_view name() const override { return "navigation_game"; }

  KindSlotFn kind_slot() const override { return &slot_of; }

  bool occlusion() const override { return true; }

  KindProfile profile(AgentKind kind, const TaskSpec& task) const override {
    KindProfile p;
    p.max_hp = 100.0;
    p.num_actions = 9;
    switch (kind) {
      case AgentKind::GroundNavigator:
        p.max_speed = 600.0;
        p.params.observation_range = 2000.0;
        break;
      case AgentKind::AirNavigator:
        p.max_speed = 800.0;
        p.airborne = true;
        p.params.observation_range = 2500.0;
        break;
      case AgentKind::GroundKeeper:
        p.max_speed = 700.0;
        p.params.observation_range = 2000.0;
        break;
      default:
        throw std::invalid_argument("navigation_game does not support agent kind " +
                                    std::string(to_string(kind)));
    }
    p.max_speed = task.override_or(std::string(to_string(kind)) + ".max_speed", p.max_speed);
    p.params.attack_range = rules::kInteractionRange;
    p.shape = Sphere{p.params.observation_range};
    p.observation = {4, 4, 2, kBaseFeatureDim, p.params.observation_range};
    return p;
  }

  void populate(WorldState& world, ObjectPool& pool, const TaskSpec&, const MapSpec& map,
                Rng&) const override {
    detail::add_obstacles(world, pool, map);
    for (const auto& l : map.landmarks) {
      detail::add_entity(world, pool, EntityKind::Landmark, l,
                         {rules::kLandmarkRadius, rules::kLandmarkRadius, 0.0});
    }
  }

  void decode_actions(WorldState& world, const PerceptionMatrix& m,
                      const StepContext&) const override {
    for (std::size_t i = 0; i < world.agents.size(); ++i) {
      AgentState& a = world.agents[i];
      if (!a.alive) continue;
      a.command = {};
      a.target_id = -1;
      auto is_foe = [&](const AgentState& o) { return o.team_id != a.team_id; };
      auto is_ally = [&](const AgentState& o) { return o.team_id == a.team_id; };
      auto head_for = [&](int j) {
        if (j >= 0) a.command = planar_direction(a.position, world.agents[j].position) * a.max_speed;
      };
      switch (a.action) {
        case kMoveNorth:
        case kMoveEast:
        case kMoveSouth:
        case kMoveWest:
          a.command = detail::compass(a.action) * a.max_speed;
          break;
        case kFlee: {
          const int j = detail::nearest_perceived(world, m, i, is_foe);
          if (j >= 0)
            a.command = planar_direction(world.agents[j].position, a.position) * a.max_speed;
          break;
        }
        case kTowardLandmark:
          // Landmarks are public knowledge; steering happens per frame.
          if (const EntityState* l = nearest_landmark(world, a.position)) a.target_id = l->entity_id;
          break;
        case kTowardFoe:
          head_for(detail::nearest_perceived(world, m, i, is_foe));
          break;
        case kTowardAlly:
          head_for(detail::nearest_perceived(world, m, i, is_ally));
          break;
        default:
          break;
      }
    }
  }

  Vec3 frame_command(const WorldState& world, const AgentState& agent,
                     const StepContext& ctx) const override {
    if (agent.forced_frames > 0) return agent.forced_velocity;
    if (agent.target_id < 0) return agent.command;
    for (const auto& e : world.entities) {
      if (e.entity_id != agent.target_id) continue;
      // Settle on the landmark instead of oscillating across it.
      const double gap = planar_distance(agent.position, e.position);
      const double speed = std::min(agent.max_speed, gap / ctx.time.frame_seconds());
      return planar_direction(agent.position, e.position) * speed;
    }
    return agent.command;
  }

  void on_frame(WorldState& world, const StepContext& ctx) const override {
    const std::int64_t fpd = ctx.time.frames_per_decision();
    for (auto& a : world.agents) {
      if (a.forced_frames > 0) --a.forced_frames;
    }

    // Displacement: a keeper near an air navigator drives it off, a ground
    // navigator near a keeper drives the keeper off.
    auto displace = [&](AgentState& victim, AgentKind by_kind) {
      const AgentState* nearest = nullptr;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& o : world.agents) {
        if (!o.alive || o.kind != by_kind) continue;
        const double d = planar_distance(victim.position, o.position);
        if (d <= rules::kInteractionRange && d < best) {
          nearest = &o;
          best = d;
        }
      }
      if (!nearest) return;
      Vec3 away = planar_direction(nearest->position, victim.position);
      if (norm(away) == 0.0) away = {1.0, 0.0, 0.0};
      victim.forced_velocity = away * victim.max_speed;
      victim.forced_frames = fpd;
      victim.hold_frames = 0;
    };
    for (auto& a : world.agents) {
      if (!a.alive) continue;
      if (a.kind == AgentKind::AirNavigator) displace(a, AgentKind::GroundKeeper);
      if (a.kind == AgentKind::GroundKeeper) displace(a, AgentKind::GroundNavigator);
    }

    const std::int64_t needed = hold_frames_needed(ctx.time);
    for (auto& a : world.agents) {
      if (!a.alive || a.kind != AgentKind::AirNavigator) continue;
      const EntityState* l = nearest_landmark(world, a.position);
      if (l && a.forced_frames == 0 &&
          planar_distance(a.position, l->position) <= rules::kLandmarkRadius) {
        if (++a.hold_frames == needed) {
          emit_event(world, EventKind::LandmarkHoldCompleted, a.agent_id, l->entity_id);
          world.team_counters[a.team_id] = 1;  // latched even if displaced later in the step
        }
      } else {
        a.hold_frames = 0;
      }
    }
  }

  bool terminal(const WorldState& world, const StepContext&) const override {
    return hold_completed(world);
  }

  std::int32_t decide_winner(const WorldState& world, const StepContext&) const override {
    const auto [nav, keep] = roles(world);
    // Running out the clock counts as a successful defence.
    return hold_completed(world) ? nav : keep;
  }

  RewardMap rewards(const WorldState&, const WorldState& after, std::span<const Event>,
                    const StepContext&) const override {
    RewardMap r = detail::zero_rewards(after);
    const auto [nav, keep] = roles(after);
    double total = 0.0;
    int n = 0;
    for (const auto& a : after.agents) {
      if (!a.alive || a.kind != AgentKind::AirNavigator) continue;
      if (const EntityState* l = nearest_landmark(after, a.position)) {
        total += planar_distance(a.position, l->position);
        ++n;
      }
    }
    const double dense = n > 0 ? -(total / n) / rules::kNavigationRewardScale : 0.0;
    if (nav >= 0) detail::add_to_team(r, after, nav, dense);
    if (keep >= 0) detail::add_to_team(r, after, keep, -dense);
    if (after.done) {
      for (std::int32_t t = 0; t < after.num_teams; ++t) {
        detail::add_to_team(r, after, t,
                            after.winner == t ? rules::kTerminalReward : -rules::kTerminalReward);
      }
    }
    return r;
  }

 private:
  static bool hold_completed(const WorldState& world) {
    for (auto held : world.team_counters) {
      if (held > 0) return true;
    }
    return false;
  }
};

}  // namespace

std::shared_ptr<const Scenario> make_navigation_game() {
  return std::make_shared<NavigationGame>();
}

}  // namespace umap
