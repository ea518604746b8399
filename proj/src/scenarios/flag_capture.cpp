// Flag Capture: robot teams race for one flag at the map objective; the team
// that holds it longest wins.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "common.hpp"

namespace umap {

namespace {

int slot_of(AgentKind) { return 0; }

const EntityState* find_flag(const WorldState& world) {
  for (const auto& e : world.entities) {
    if (e.kind == EntityKind::Flag) return &e;
  }
  return nullptr;
}

EntityState* find_flag(WorldState& world) {
  return const_cast<EntityState*>(find_flag(std::as_const(world)));
}

class FlagCapture final : public Scenario {
 public:
  std::string_view name() const override { return "flag_capture"; }

  KindSlotFn kind_slot() const override { return &slot_of; }

  KindProfile profile(AgentKind kind, const TaskSpec& task) const override {
    if (kind != AgentKind::Robot)
      throw std::invalid_argument("flag_capture does not support agent kind " +
                                  std::string(to_string(kind)));
    KindProfile p;
    p.max_hp = 100.0;
    p.max_speed = task.override_or("robot.max_speed", 400.0);
    p.params = {0.0, 0.0, 2500.0, 0.0};
    p.shape = Cone{p.params.observation_range, std::numbers::pi / 3.0};
    p.observation = {6, 6, 1, kBaseFeatureDim, p.params.observation_range};
    p.num_actions = 8;
    return p;
  }

  void populate(WorldState& world, ObjectPool& pool, const TaskSpec&, const MapSpec& map,
                Rng&) const override {
    detail::add_obstacles(world, pool, map);
    EntityState& flag = detail::add_entity(world, pool, EntityKind::Flag, map.objective,
                                           {rules::kFlagPickupRadius, rules::kFlagPickupRadius, 0.0});
    flag.holder_id = -1;
    flag.holder_team = -1;
  }

  // Robots always move at full speed; the action picks one of 8 headings,
  // counter-clockwise from +x in 45 degree increments.
  void decode_actions(WorldState& world, const PerceptionMatrix&,
                      const StepContext&) const override {
    for (auto& a : world.agents) {
      if (!a.alive) continue;
      const double angle = a.action * std::numbers::pi / 4.0;
      a.command = Vec3{std::cos(angle), std::sin(angle), 0.0} * a.max_speed;
    }
  }

  void on_frame(WorldState& world, const StepContext& ctx) const override {
    EntityState* flag = find_flag(world);
    if (!flag) return;

    auto gap = [&](const AgentState& a) { return planar_distance(a.position, flag->position); };

    if (flag->holder_id >= 0) {
      const AgentState* h = world.find_agent(flag->holder_id);
      if (!h || !h->alive || gap(*h) > rules::kFlagPickupRadius) release(world, *flag);
    }

    const AgentState* nearest = nullptr;
    for (const auto& a : world.agents) {
      if (!a.alive || gap(a) > rules::kFlagPickupRadius) continue;
      if (!nearest || gap(a) < gap(*nearest) ||
          (gap(a) == gap(*nearest) && a.agent_id < nearest->agent_id))
        nearest = &a;
    }
    if (nearest) {
      if (flag->holder_id < 0) {
        grab(world, *flag, *nearest);
      } else if (nearest->team_id != flag->holder_team &&
                 gap(*nearest) < gap(*world.find_agent(flag->holder_id))) {
        // A rival strictly closer to the flag takes it.
        release(world, *flag);
        grab(world, *flag, *nearest);
      }
    }

    if (ctx.last_frame && flag->holder_team >= 0) ++world.team_counters[flag->holder_team];
  }

  bool terminal(const WorldState&, const StepContext&) const override { return false; }

  std::int32_t decide_winner(const WorldState& world, const StepContext&) const override {
    std::int32_t best = kOutcomeTie;
    std::int64_t best_steps = 0;
    bool tie = false;
    for (std::int32_t t = 0; t < static_cast<std::int32_t>(world.team_counters.size()); ++t) {
      const std::int64_t steps = world.team_counters[t];
      if (steps > best_steps) {
        best = t;
        best_steps = steps;
        tie = false;
      } else if (steps == best_steps && steps > 0) {
        tie = true;
      }
    }
    return tie ? kOutcomeTie : best;
  }

  RewardMap rewards(const WorldState& before, const WorldState& after, std::span<const Event>,
                    const StepContext&) const override {
    RewardMap r = detail::zero_rewards(after);
    for (std::int32_t t = 0; t < after.num_teams; ++t) {
      const auto held = after.team_counters[t] - before.team_counters[t];
      if (held > 0) detail::add_to_team(r, after, t, rules::kFlagHoldReward * static_cast<double>(held));
    }
    if (after.done && after.winner >= 0)
      detail::add_to_team(r, after, after.winner, rules::kTerminalReward);
    return r;
  }

 private:
  static void grab(WorldState& world, EntityState& flag, const AgentState& agent) {
    flag.holder_id = agent.agent_id;
    flag.holder_team = agent.team_id;
    emit_event(world, EventKind::FlagPickedUp, agent.agent_id, flag.entity_id);
  }

  static void release(WorldState& world, EntityState& flag) {
    emit_event(world, EventKind::FlagDropped, flag.holder_id, flag.entity_id);
    flag.holder_id = -1;
    flag.holder_team = -1;
  }
};

}  // namespace

std::shared_ptr<const Scenario> make_flag_capture() { return std::make_shared<FlagCapture>(); }

}  // namespace umap
