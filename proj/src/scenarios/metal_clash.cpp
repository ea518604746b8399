// Metal Clash: two-team heterogeneous combat between laser cars, missile cars
// and support drones.

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "common.hpp"

namespace umap {

namespace {

using namespace metal_clash;

int slot_of(AgentKind kind) {
  switch (kind) {
    case AgentKind::LaserCar: return 0;
    case AgentKind::MissileCar: return 1;
    default: return 2;
  }
}

bool can_attack(const AgentState& attacker, const AgentState& target) {
  // Laser cars hit ground units only.
  return attacker.kind != AgentKind::LaserCar || !target.airborne;
}

class MetalClash final : public Scenario {
 public:
  std::string_view name() const override { return "metal_clash"; }

  KindSlotFn kind_slot() const override { return &slot_of; }

  KindProfile profile(AgentKind kind, const TaskSpec& task) const override {
    KindProfile p;
    p.num_actions = 9;
    switch (kind) {
      case AgentKind::LaserCar:
        p.max_speed = 800.0;
        p.max_hp = 100.0;
        p.params = {1.0, 500.0, 2000.0, 0.0};
        p.observation = {5, 5, 0, kBaseFeatureDim, 2000.0};
        break;
      case AgentKind::MissileCar:
        p.max_speed = 500.0;
        p.max_hp = 150.0;
        p.params = {1.0, 1000.0, 2500.0, 0.0};
        p.observation = {8, 8, 0, kBaseFeatureDim, 2500.0};
        break;
      case AgentKind::SupportDrone:
        p.max_speed = 1000.0;
        p.max_hp = 50.0;
        p.airborne = true;
        p.params = {1.0 / 6.0, 1700.0, 2500.0, 1700.0};
        p.observation = {10, 10, 0, kDroneFeatureDim, 2500.0};
        p.num_actions = 10;
        break;
      default:
        throw std::invalid_argument("metal_clash does not support agent kind " +
                                    std::string(to_string(kind)));
    }
    const std::string prefix = std::string(to_string(kind)) + ".";
    p.max_speed = task.override_or(prefix + "max_speed", p.max_speed);
    p.max_hp = task.override_or(prefix + "hp", p.max_hp);
    p.params.attack_power = task.override_or(prefix + "attack_power", p.params.attack_power);
    p.params.attack_range = task.override_or(prefix + "attack_range", p.params.attack_range);
    p.shape = Sphere{p.params.observation_range};
    return p;
  }

  void populate(WorldState& world, ObjectPool& pool, const TaskSpec&, const MapSpec& map,
                Rng&) const override {
    detail::add_obstacles(world, pool, map);
  }

  void decode_actions(WorldState& world, const PerceptionMatrix& m,
                      const StepContext&) const override {
    for (std::size_t i = 0; i < world.agents.size(); ++i) {
      AgentState& a = world.agents[i];
      if (!a.alive) continue;
      a.command = {};
      a.target_id = -1;
      auto is_foe = [&](const AgentState& o) { return o.team_id != a.team_id; };
      auto attackable = [&](const AgentState& o) { return is_foe(o) && can_attack(a, o); };

      switch (a.action) {
        case kIdle:
          break;
        case kMoveNorth:
        case kMoveEast:
        case kMoveSouth:
        case kMoveWest:
          a.command = detail::compass(a.action) * a.max_speed;
          break;
        case kAttackNearest:
        case kAttackWeakest: {
          const int target = a.action == kAttackNearest ? nearest_in_range(world, m, i)
                                                        : weakest_in_range(world, m, i);
          if (target >= 0) {
            a.target_id = world.agents[target].agent_id;
          } else if (a.pursue) {
            const int chase = detail::nearest_perceived(world, m, i, attackable);
            if (chase >= 0)
              a.command = planar_direction(a.position, world.agents[chase].position) * a.max_speed;
          }
          break;
        }
        case kFlee: {
          const int threat = detail::nearest_perceived(world, m, i, is_foe);
          if (threat >= 0)
            a.command = planar_direction(world.agents[threat].position, a.position) * a.max_speed;
          break;
        }
        case kTogglePursue:
          a.pursue = !a.pursue;
          break;
        case kHeal:
          a.target_id = heal_target(world, m, i);
          break;
        default:
          break;
      }
    }
  }

  void on_frame(WorldState& world, const StepContext& ctx) const override {
    if (!ctx.last_frame) return;
    // Attacks and heals resolve simultaneously on the step's final frame, from
    // the pre-resolution state, so mutual kills both land.
    std::map<std::int32_t, double> damage;
    std::vector<std::pair<std::int32_t, std::int32_t>> heals;  // (healer, target)
    for (const auto& a : world.agents) {
      if (!a.alive || a.target_id < 0) continue;
      const AgentState* t = world.find_agent(a.target_id);
      if (!t || !t->alive) continue;
      const double d = distance(a.position, t->position);
      if (a.action == kHeal) {
        if (d <= a.params.support_range) heals.emplace_back(a.agent_id, t->agent_id);
      } else if (d <= a.params.attack_range && can_attack(a, *t)) {
        damage[t->agent_id] += a.params.attack_power;
        emit_event(world, EventKind::AttackLanded, a.agent_id, t->agent_id, a.params.attack_power);
      }
    }
    for (const auto& [id, dmg] : damage) {
      AgentState& t = *world.find_agent(id);
      const double remaining = t.hp - dmg;
      if (remaining <= 1e-9) {
        t.hp = 0.0;
        t.alive = false;
        t.velocity = {};
        t.command = {};
        emit_event(world, EventKind::AgentDestroyed, t.agent_id);
      } else {
        t.hp = remaining;
      }
    }
    for (const auto& [healer, target] : heals) {
      AgentState& t = *world.find_agent(target);
      if (!t.alive) continue;
      const double applied = std::min(rules::kDroneHealPerStep, t.max_hp - t.hp);
      if (applied <= 0.0) continue;
      t.hp += applied;
      emit_event(world, EventKind::HealApplied, healer, target, applied);
    }
  }

  bool terminal(const WorldState& world, const StepContext&) const override {
    for (std::int32_t t = 0; t < world.num_teams; ++t) {
      if (!detail::team_alive(world, t)) return true;
    }
    return false;
  }

  std::int32_t decide_winner(const WorldState& world, const StepContext&) const override {
    std::vector<double> total(world.num_teams, 0.0);
    for (const auto& a : world.agents) total[a.team_id] += a.hp;
    std::int32_t best = kOutcomeTie;
    double best_hp = -1.0;
    bool tie = false;
    for (std::int32_t t = 0; t < world.num_teams; ++t) {
      if (total[t] > best_hp) {
        best = t;
        best_hp = total[t];
        tie = false;
      } else if (total[t] == best_hp) {
        tie = true;
      }
    }
    return tie ? kOutcomeTie : best;
  }

  RewardMap rewards(const WorldState&, const WorldState& after, std::span<const Event> events,
                    const StepContext&) const override {
    RewardMap r = detail::zero_rewards(after);
    for (const auto& e : events) {
      if (e.kind != EventKind::AgentDestroyed) continue;
      const std::int32_t victim_team = after.find_agent(e.subject_id)->team_id;
      for (std::int32_t t = 0; t < after.num_teams; ++t) {
        detail::add_to_team(r, after, t, t == victim_team ? -rules::kLossPenalty : rules::kKillReward);
      }
    }
    if (after.done) {
      for (std::int32_t t = 0; t < after.num_teams; ++t) {
        const bool won = after.winner == t;
        detail::add_to_team(r, after, t, won ? rules::kTerminalReward : -rules::kTerminalReward);
      }
    }
    return r;
  }

 private:
  static int nearest_in_range(const WorldState& world, const PerceptionMatrix& m, std::size_t i) {
    const AgentState& a = world.agents[i];
    return detail::nearest_perceived(world, m, i, [&](const AgentState& o) {
      return o.team_id != a.team_id && can_attack(a, o) &&
             distance(a.position, o.position) <= a.params.attack_range;
    });
  }

  static int weakest_in_range(const WorldState& world, const PerceptionMatrix& m, std::size_t i) {
    const AgentState& a = world.agents[i];
    int best = -1;
    for (std::size_t j = 0; j < world.agents.size(); ++j) {
      const AgentState& o = world.agents[j];
      if (j == i || !m(i, j) || !o.alive || o.team_id == a.team_id || !can_attack(a, o)) continue;
      const double d = distance(a.position, o.position);
      if (d > a.params.attack_range) continue;
      if (best < 0) {
        best = static_cast<int>(j);
        continue;
      }
      const AgentState& b = world.agents[best];
      const double bd = distance(a.position, b.position);
      if (o.hp < b.hp || (o.hp == b.hp && (d < bd || (d == bd && o.agent_id < b.agent_id))))
        best = static_cast<int>(j);
    }
    return best;
  }

  // Lowest hp fraction among damaged ground allies in support range.
  static std::int32_t heal_target(const WorldState& world, const PerceptionMatrix& m,
                                  std::size_t i) {
    const AgentState& a = world.agents[i];
    std::int32_t best = -1;
    double best_frac = 2.0;
    for (std::size_t j = 0; j < world.agents.size(); ++j) {
      const AgentState& o = world.agents[j];
      if (j == i || !m(i, j) || !o.alive || o.team_id != a.team_id || o.airborne) continue;
      if (o.hp >= o.max_hp || distance(a.position, o.position) > a.params.support_range) continue;
      const double frac = o.hp / o.max_hp;
      if (frac < best_frac) {
        best_frac = frac;
        best = o.agent_id;
      }
    }
    return best;
  }
};

}  // namespace

std::shared_ptr<const Scenario> make_metal_clash() { return std::make_shared<MetalClash>(); }

}  // namespace umap
