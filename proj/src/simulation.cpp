#include "umap/simulation.hpp"

#include <algorithm>
#include <string>

namespace umap {

Simulation::Simulation(TaskSpec task, MapSpec map, TimeConfig time)
    : task_(std::move(task)), map_(std::move(map)), time_(time) {
  task_.validate();
  map_.validate();
  if (!map_.fits(task_))
    throw std::invalid_argument("map '" + map_.id + "' has fewer spawn regions than task '" +
                                task_.name + "' has teams");
  scenario_ = make_scenario(task_.scenario);
  for (const auto& team : task_.teams) {
    for (const auto& [kind, count] : team.members) {
      if (!profiles_.contains(kind)) {
        KindProfile p = scenario_->profile(kind, task_);
        validate(p.shape);
        profiles_.emplace(kind, p);
      }
    }
  }
}

Simulation::Simulation(const Registry& registry, std::string_view task_name, TimeConfig time)
    : Simulation(registry.task(task_name), registry.map(registry.task(task_name).map_id), time) {}

void Simulation::set_time(const TimeConfig& time) { time_ = time; }

const KindProfile& Simulation::profile(AgentKind kind) const { return profiles_.at(kind); }

int Simulation::num_actions(std::int32_t agent_id) const {
  const AgentState* a = world_.find_agent(agent_id);
  if (!a) throw ActionError("unknown agent id " + std::to_string(agent_id));
  return profile(a->kind).num_actions;
}

void Simulation::spawn_agents(Rng& spawn_rng) {
  std::int32_t next_id = 0;
  for (std::size_t t = 0; t < task_.teams.size(); ++t) {
    const Box& region = map_.spawn_regions[t];
    for (const auto& [kind, count] : task_.teams[t].members) {
      const KindProfile& p = profile(kind);
      for (int i = 0; i < count; ++i) {
        AgentState a = pool_.acquire_agent(kind);
        a.agent_id = next_id++;
        a.team_id = static_cast<std::int32_t>(t);
        a.max_hp = p.max_hp;
        a.hp = p.max_hp;
        a.max_speed = p.max_speed;
        a.airborne = p.airborne;
        a.params = p.params;
        a.alive = true;
        a.position.x = spawn_rng.uniform(region.center.x - region.half.x,
                                         region.center.x + region.half.x);
        a.position.y = spawn_rng.uniform(region.center.y - region.half.y,
                                         region.center.y + region.half.y);
        a.position.z = p.airborne ? kAirAltitude : 0.0;
        const Vec3 facing = planar_direction(a.position, map_.objective);
        a.heading = norm(facing) > 0.0 ? facing : Vec3{1.0, 0.0, 0.0};
        world_.agents.push_back(a);
      }
    }
  }
}

const WorldState& Simulation::reset(std::uint64_t seed) {
  pool_.release_all(world_);
  seed_ = seed;
  world_.clock = {};
  world_.episode_step = 0;
  world_.done = false;
  world_.winner = kOutcomePending;
  world_.num_teams = num_teams();
  world_.team_counters.assign(task_.teams.size(), 0);
  world_.rng = Rng::substream(seed, Substream::Scenario);

  Rng spawn_rng = Rng::substream(seed, Substream::Spawn);
  spawn_agents(spawn_rng);
  scenario_->populate(world_, pool_, task_, map_, spawn_rng);

  shapes_.clear();
  for (const auto& a : world_.agents) shapes_.push_back(profile(a.kind).shape);
  perception_.reset();
  hasher_ = TrajectoryHasher{};
  hasher_.absorb(world_, {});
  has_reset_ = true;
  return world_;
}

void Simulation::validate_actions(const JointAction& actions) const {
  if (!has_reset_) throw ActionError("step before reset");
  if (world_.done) throw ActionError("episode is over; reset first");
  for (const auto& [id, action] : actions) {
    const AgentState* a = world_.find_agent(id);
    if (!a) throw ActionError("action for unknown agent id " + std::to_string(id));
    if (!a->alive) continue;
    const int n = profile(a->kind).num_actions;
    if (action < 0 || action >= n)
      throw ActionError("action " + std::to_string(action) + " out of range for agent " +
                        std::to_string(id));
  }
  for (const auto& a : world_.agents) {
    if (a.alive && !actions.contains(a.agent_id))
      throw ActionError("missing action for living agent " + std::to_string(a.agent_id));
  }
}

StepOutcome Simulation::step(const JointAction& actions) {
  validate_actions(actions);

  StepContext ctx{task_, map_, time_};
  const WorldState before = world_;
  world_.pending_events.clear();

  const PerceptionMatrix& matrix = perception();
  for (auto& a : world_.agents) {
    if (a.alive) {
      a.action = actions.at(a.agent_id);
    } else {
      a.command = {};
      a.target_id = -1;
    }
  }
  scenario_->decode_actions(world_, matrix, ctx);

  const std::int64_t fpd = time_.frames_per_decision();
  const double dt = time_.frame_seconds();
  const Box& bounds = map_.bounds;
  Pacer pacer(time_);
  std::size_t last_frame_first = 0;
  for (std::int64_t f = 1; f <= fpd; ++f) {
    ctx.frame_in_step = f;
    ctx.last_frame = f == fpd;
    for (auto& a : world_.agents) {
      if (!a.alive) continue;
      a = integrate_kinematics(a, scenario_->frame_command(world_, a, ctx), dt);
      a.position.x = std::clamp(a.position.x, bounds.center.x - bounds.half.x,
                                bounds.center.x + bounds.half.x);
      a.position.y = std::clamp(a.position.y, bounds.center.y - bounds.half.y,
                                bounds.center.y + bounds.half.y);
    }
    world_.clock = advance_frame(world_.clock, fpd);
    last_frame_first = world_.pending_events.size();
    scenario_->on_frame(world_, ctx);
    order_events(world_.pending_events, last_frame_first);
    if (pacing_) pacer.after_frame();
  }

  ++world_.episode_step;
  const bool done =
      scenario_->terminal(world_, ctx) || world_.episode_step >= task_.max_episode_steps;
  if (done) {
    world_.winner = scenario_->decide_winner(world_, ctx);
    emit_event(world_, EventKind::EpisodeEnded, world_.winner);
    order_events(world_.pending_events, last_frame_first);
  }
  world_.done = done;

  StepOutcome out;
  out.rewards = scenario_->rewards(before, world_, world_.pending_events, ctx);
  out.events = world_.pending_events;
  out.done = done;
  perception_.reset();
  hasher_.absorb(world_, world_.pending_events);
  return out;
}

const PerceptionMatrix& Simulation::perception() const {
  if (!perception_) perception_ = build_matrix(world_, shapes_, scenario_->occlusion());
  return *perception_;
}

ObservationSpec Simulation::observation_spec(std::size_t agent_index) const {
  return profile(world_.agents.at(agent_index).kind).observation;
}

std::vector<double> Simulation::observation(std::size_t agent_index) const {
  return assemble_observation(world_, perception(), agent_index, observation_spec(agent_index),
                              scenario_->kind_slot());
}

}  // namespace umap
