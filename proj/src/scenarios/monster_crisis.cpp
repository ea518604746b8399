// Monster Crisis: a single team of mushrooms must cooperate to bring down a
// stationary monster that strikes back at everything near it.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

#include "common.hpp"

namespace umap {

namespace {

using namespace monster_crisis;

int slot_of(AgentKind) { return 0; }

const EntityState* find_monster(const WorldState& world) {
  for (const auto& e : world.entities) {
    if (e.kind == EntityKind::Monster) return &e;
  }
  return nullptr;
}

EntityState* find_monster(WorldState& world) {
  return const_cast<EntityState*>(find_monster(std::as_const(world)));
}

bool monster_alive(const WorldState& world) {
  const EntityState* m = find_monster(world);
  return m && m->active;
}

class MonsterCrisis final : public Scenario {
 public:
  std::string_view name() const override { return "monster_crisis"; }

  KindSlotFn kind_slot() const override { return &slot_of; }

  KindProfile profile(AgentKind kind, const TaskSpec& task) const override {
    if (kind != AgentKind::Mushroom)
      throw std::invalid_argument("monster_crisis does not support agent kind " +
                                  std::string(to_string(kind)));
    KindProfile p;
    p.max_hp = task.override_or("mushroom.hp", 100.0);
    p.max_speed = task.override_or("mushroom.max_speed", 300.0);
    p.params = {rules::kMushroomCollideDamage, rules::kMonsterContactRange, 2000.0, 0.0};
    p.shape = Sphere{p.params.observation_range};
    p.observation = {7, 0, 1, kBaseFeatureDim, p.params.observation_range};
    p.num_actions = 7;
    return p;
  }

  void populate(WorldState& world, ObjectPool& pool, const TaskSpec& task, const MapSpec& map,
                Rng&) const override {
    detail::add_obstacles(world, pool, map);
    EntityState& m = detail::add_entity(world, pool, EntityKind::Monster, map.objective,
                                        {150.0, 150.0, 150.0});
    m.max_hp = task.override_or("monster_hp", 400.0);
    m.hp = m.max_hp;
  }

  void decode_actions(WorldState& world, const PerceptionMatrix&,
                      const StepContext&) const override {
    const EntityState* monster = find_monster(world);
    for (auto& a : world.agents) {
      if (!a.alive) continue;
      switch (a.action) {
        case kMaintain:
          // The previous step's command and target stay latched.
          break;
        case kCollide:
          a.command = {};
          a.target_id = monster ? monster->entity_id : -1;
          break;
        default:
          a.command = detail::compass(a.action) * a.max_speed;
          a.target_id = -1;
          break;
      }
    }
  }

  Vec3 frame_command(const WorldState& world, const AgentState& agent,
                     const StepContext& ctx) const override {
    if (agent.target_id < 0) return agent.command;
    const EntityState* monster = find_monster(world);
    if (!monster) return {};
    // Head for the monster but stop on top of it rather than overshooting.
    const double gap = planar_distance(agent.position, monster->position);
    const double speed = std::min(agent.max_speed, gap / ctx.time.frame_seconds());
    return planar_direction(agent.position, monster->position) * speed;
  }

  void on_frame(WorldState& world, const StepContext& ctx) const override {
    if (!ctx.last_frame) return;
    EntityState* monster = find_monster(world);
    if (!monster || !monster->active) return;

    // Both sides strike simultaneously from the positions at the end of the step.
    double to_monster = 0.0;
    std::vector<std::int32_t> struck;
    for (const auto& a : world.agents) {
      if (!a.alive) continue;
      const double d = planar_distance(a.position, monster->position);
      if (a.target_id == monster->entity_id && d <= rules::kMonsterContactRange) {
        to_monster += rules::kMushroomCollideDamage;
        emit_event(world, EventKind::AttackLanded, a.agent_id, monster->entity_id,
                   rules::kMushroomCollideDamage);
      }
      if (d <= rules::kMonsterDefenseRange) struck.push_back(a.agent_id);
    }
    for (std::int32_t id : struck) {
      emit_event(world, EventKind::AttackLanded, monster->entity_id, id,
                 rules::kMonsterDefenseDamage);
      AgentState& a = *world.find_agent(id);
      const double remaining = a.hp - rules::kMonsterDefenseDamage;
      if (remaining <= 1e-9) {
        a.hp = 0.0;
        a.alive = false;
        a.velocity = {};
        a.command = {};
        emit_event(world, EventKind::AgentDestroyed, id);
      } else {
        a.hp = remaining;
      }
    }
    if (to_monster > 0.0) {
      const double remaining = monster->hp - to_monster;
      if (remaining <= 1e-9) {
        monster->hp = 0.0;
        monster->active = false;
        emit_event(world, EventKind::MonsterKilled, monster->entity_id);
      } else {
        monster->hp = remaining;
      }
    }
  }

  bool terminal(const WorldState& world, const StepContext&) const override {
    return !monster_alive(world) || !detail::team_alive(world, 0);
  }

  std::int32_t decide_winner(const WorldState& world, const StepContext&) const override {
    return monster_alive(world) ? kOutcomeTie : 0;
  }

  RewardMap rewards(const WorldState&, const WorldState& after, std::span<const Event> events,
                    const StepContext&) const override {
    RewardMap r = detail::zero_rewards(after);
    for (const auto& e : events) {
      if (e.kind == EventKind::MonsterKilled) detail::add_to_team(r, after, 0, rules::kTerminalReward);
    }
    return r;
  }
};

}  // namespace

std::shared_ptr<const Scenario> make_monster_crisis() { return std::make_shared<MonsterCrisis>(); }

}  // namespace umap
