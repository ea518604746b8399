#include <doctest.h>

#include <set>

#include "test_support.hpp"

using namespace umap;
using namespace umap::testing;

namespace {

AgentState car(double max_speed) {
  AgentState a;
  a.max_speed = max_speed;
  return a;
}

// Red: two laser cars; blue: one fragile missile car and one laser car, 300 u apart.
Simulation duel() {
  const MapSpec map = small_map("duel", {{-150, 0, 0}, {150, 0, 0}});
  TaskSpec task = make_task("metal_clash",
                            {{"red", {{AgentKind::LaserCar, 2}}, true},
                             {"blue", {{AgentKind::MissileCar, 1}, {AgentKind::LaserCar, 1}}, false}},
                            map.id, 125);
  task.overrides["missile_car.hp"] = 1.0;
  return Simulation(task, map, coarse());
}

}  // namespace

TEST_CASE("kinematics integrates and clamps speed") {
  const double dt = 1.0 / 30.0;
  AgentState laser = integrate_kinematics(car(800), {600, 0, 0}, dt);
  CHECK(laser.position.x == doctest::Approx(20.0));
  CHECK(laser.velocity.x == doctest::Approx(600.0));

  AgentState still = integrate_kinematics(car(800), {}, dt);
  CHECK(still.position == Vec3{});

  AgentState missile = integrate_kinematics(car(500), {2000, 0, 0}, dt);
  CHECK(missile.velocity.x == doctest::Approx(500.0));
  CHECK(missile.position.x == doctest::Approx(500.0 * dt));

  AgentState diag = integrate_kinematics(car(500), {1000, 1000, 0}, dt);
  CHECK(norm(diag.velocity) == doctest::Approx(500.0));

  AgentState flyer = car(1000);
  flyer.airborne = true;
  flyer = integrate_kinematics(flyer, {0, 0, 300}, dt);
  CHECK(flyer.position.z == kAirAltitude);
  AgentState ground = integrate_kinematics(car(800), {0, 0, 300}, dt);
  CHECK(ground.position.z == 0.0);
}

TEST_CASE("events are stamped with the frame and ordered by frame then subject") {
  WorldState w;
  w.clock.frame_index = 7;
  emit_event(w, EventKind::HealApplied, 2, 1, 5.0);
  REQUIRE(w.pending_events.size() == 1);
  CHECK(w.pending_events[0] == Event{EventKind::HealApplied, 7, 2, 1, 5.0});

  emit_event(w, EventKind::AgentDestroyed, 9);
  emit_event(w, EventKind::AgentDestroyed, 3);
  w.clock.frame_index = 6;
  emit_event(w, EventKind::EpisodeEnded, 0);
  order_events(w.pending_events, 1);
  CHECK(w.pending_events[0].subject_id == 2);  // before `first`, untouched
  CHECK(w.pending_events[1].frame_index == 6);
  CHECK(w.pending_events[2].subject_id == 3);
  CHECK(w.pending_events[3].subject_id == 9);
}

TEST_CASE("event and kind names round-trip") {
  for (int k = 0; k <= static_cast<int>(EventKind::HealApplied); ++k) {
    const auto kind = static_cast<EventKind>(k);
    CHECK(event_kind_from_string(to_string(kind)) == kind);
  }
  CHECK(agent_kind_from_string("laser_car") == AgentKind::LaserCar);
  CHECK(agent_kind_from_string("Laser-Car") == AgentKind::LaserCar);
  CHECK_THROWS_AS(agent_kind_from_string("tank"), std::invalid_argument);
}

TEST_CASE("discounted team return") {
  std::vector<RewardMap> trace{{{0, 0.1}, {1, 0.1}, {2, 5.0}}, {{0, 0.0}, {1, 0.0}, {2, 5.0}}};
  const std::vector<std::int32_t> team{0, 1};
  CHECK(discounted_team_return(trace, team, 0.5) == doctest::Approx(0.2));
  CHECK(discounted_team_return(trace, team, 0.0) == doctest::Approx(0.2));

  std::vector<RewardMap> single{{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}};
  const std::vector<std::int32_t> one{0};
  CHECK(discounted_team_return(single, one, 0.5) == doctest::Approx(1.75));
  CHECK(discounted_team_return(single, one, 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(discounted_team_return(single, one, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(discounted_team_return(single, one, -0.1), std::invalid_argument);
}

TEST_CASE("trajectory hash") {
  CHECK(trajectory_hash({}, {}) == TrajectoryHasher::kEmptyDigest);
  CHECK(digest_hex(TrajectoryHasher::kEmptyDigest) == "cbf29ce484222325");

  WorldState a;
  a.agents.push_back(AgentState{});
  WorldState b = a;
  b.agents[0].position.x = 1e-3;
  const std::vector<WorldState> sa{a, a}, sb{a, b}, swapped{b, a};
  const std::vector<std::vector<Event>> none;
  CHECK(trajectory_hash(sa, none) != trajectory_hash(sb, none));
  CHECK(trajectory_hash(sb, none) != trajectory_hash(swapped, none));  // order-sensitive

  WorldState c = a;
  c.agents[0].position.x = 1e-8;  // below the quantum
  const std::vector<WorldState> sc{a, c};
  CHECK(trajectory_hash(sa, none) == trajectory_hash(sc, none));
}

TEST_CASE("reset spawns the roster at full hp and is deterministic") {
  Simulation mc(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  const WorldState w = mc.reset(7);
  CHECK(w.agents.size() == 20);
  int lasers = 0, missiles = 0;
  for (const auto& a : w.agents) {
    CHECK(a.hp == a.max_hp);
    CHECK(a.alive);
    lasers += a.kind == AgentKind::LaserCar;
    missiles += a.kind == AgentKind::MissileCar;
  }
  CHECK(lasers == 10);
  CHECK(missiles == 10);
  CHECK(w.team_members(0).size() == 10);
  CHECK(w.team_members(1).size() == 10);
  CHECK(mc.reset(7) == w);
  CHECK(mc.reset(8) != w);

  Simulation crisis(Registry::builtin(), "monster_crisis_easy", coarse());
  const WorldState& m = crisis.reset(0);
  CHECK(m.agents.size() == 8);
  int monsters = 0;
  for (const auto& e : m.entities) {
    if (e.kind != EntityKind::Monster) continue;
    ++monsters;
    CHECK(e.hp == 400.0);
  }
  CHECK(monsters == 1);
}

TEST_CASE("invalid rosters are rejected") {
  const MapSpec map = small_map("m", {{0, 0, 0}, {100, 0, 0}});
  CHECK_THROWS_AS(Simulation(make_task("metal_clash", {{"red", {}, true}, {"blue", {{AgentKind::LaserCar, 1}}, true}},
                                       map.id),
                             map, coarse()),
                  std::invalid_argument);
  CHECK_THROWS_AS(Simulation(make_task("metal_clash",
                                       {{"red", {{AgentKind::Mushroom, 1}}, true},
                                        {"blue", {{AgentKind::LaserCar, 1}}, true}},
                                       map.id),
                             map, coarse()),
                  std::invalid_argument);
  CHECK_THROWS_AS(Simulation(make_task("metal_clash",
                                       {{"a", {{AgentKind::LaserCar, 1}}, true},
                                        {"b", {{AgentKind::LaserCar, 1}}, true},
                                        {"c", {{AgentKind::LaserCar, 1}}, true}},
                                       map.id),
                             map, coarse()),
                  std::invalid_argument);  // three teams, two spawn regions
}

TEST_CASE("idle step on an open map changes nothing") {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  const WorldState before = sim.reset(3);
  const StepOutcome out = sim.step(uniform_actions(before, metal_clash::kIdle));
  CHECK(out.events.empty());
  CHECK_FALSE(out.done);
  for (const auto& [id, r] : out.rewards) CHECK(r == 0.0);
  for (std::size_t i = 0; i < before.agents.size(); ++i)
    CHECK(sim.state().agents[i].position == before.agents[i].position);
  CHECK(sim.state().clock.frame_index == 15);
  CHECK(sim.state().clock.decision_index == 1);
  CHECK(sim.state().episode_step == 1);
}

TEST_CASE("one enemy destroyed gives every ally the kill reward") {
  Simulation sim = duel();
  const WorldState& w = sim.reset(1);
  JointAction j;
  for (const auto& a : w.agents) j[a.agent_id] = a.team_id == 0 ? metal_clash::kAttackWeakest : metal_clash::kIdle;
  const StepOutcome out = sim.step(j);
  int destroyed = 0;
  for (const auto& e : out.events) {
    if (e.kind != EventKind::AgentDestroyed) continue;
    ++destroyed;
    CHECK(e.subject_id == 2);  // the fragile missile car
  }
  CHECK(destroyed == 1);
  CHECK_FALSE(out.done);
  CHECK(out.rewards.at(0) == doctest::Approx(rules::kKillReward));
  CHECK(out.rewards.at(1) == doctest::Approx(rules::kKillReward));
  CHECK(out.rewards.at(2) == doctest::Approx(-rules::kLossPenalty));
  CHECK(out.rewards.at(3) == doctest::Approx(-rules::kLossPenalty));
}

TEST_CASE("reaching the step limit ends the episode") {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  sim.reset(5);
  StepOutcome out;
  for (int s = 0; s < 125; ++s) {
    REQUIRE_FALSE(sim.state().done);
    out = sim.step(uniform_actions(sim.state(), metal_clash::kIdle));
  }
  CHECK(out.done);
  REQUIRE_FALSE(out.events.empty());
  CHECK(out.events.back().kind == EventKind::EpisodeEnded);
  CHECK(sim.state().episode_step == 125);
  CHECK_THROWS_AS(sim.step(uniform_actions(sim.state(), metal_clash::kIdle)), ActionError);
}

TEST_CASE("a missing or bad action errors and leaves the world untouched") {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  CHECK_THROWS_AS(sim.step({}), ActionError);  // before reset
  const WorldState before = sim.reset(2);
  const std::uint64_t digest = sim.digest();

  JointAction missing = uniform_actions(before, metal_clash::kMoveEast);
  missing.erase(4);
  CHECK_THROWS_AS(sim.step(missing), ActionError);

  JointAction out_of_range = uniform_actions(before, metal_clash::kMoveEast);
  out_of_range[0] = 99;
  CHECK_THROWS_AS(sim.step(out_of_range), ActionError);

  JointAction unknown = uniform_actions(before, metal_clash::kMoveEast);
  unknown[1000] = 0;
  CHECK_THROWS_AS(sim.step(unknown), ActionError);

  CHECK(sim.state() == before);
  CHECK(sim.digest() == digest);
}

TEST_CASE("dead agents' actions are ignored") {
  Simulation sim = duel();
  const WorldState& w = sim.reset(1);
  JointAction j;
  for (const auto& a : w.agents) j[a.agent_id] = a.team_id == 0 ? metal_clash::kAttackWeakest : metal_clash::kIdle;
  sim.step(j);
  REQUIRE_FALSE(sim.state().agents[2].alive);
  JointAction next = uniform_actions(sim.state(), metal_clash::kIdle);
  CHECK_FALSE(next.contains(2));
  CHECK_NOTHROW(sim.step(next));
  sim.reset(1);
  sim.step(j);
  next[2] = metal_clash::kMoveNorth;
  const Vec3 corpse = sim.state().agents[2].position;
  sim.step(next);
  CHECK(sim.state().agents[2].position == corpse);
}

TEST_CASE("digest is invariant under dilation and differs across seeds") {
  auto run = [](double dilation, std::uint64_t seed) {
    Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", TimeConfig(0.5, 30, dilation));
    sim.reset(seed);
    Rng rng(seed);
    for (int s = 0; s < 3; ++s) sim.step(random_actions(sim, rng));
    return sim.digest();
  };
  CHECK(run(64.0, 11) == run(TimeConfig::kUnpaced, 11));
  CHECK(run(1e6, 11) == run(TimeConfig::kUnpaced, 11));
  std::set<std::uint64_t> digests;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
    sim.reset(s);
    digests.insert(sim.digest());
  }
  CHECK(digests.size() == 100);
}

TEST_CASE("object pool recycles across episodes") {
  Simulation sim(Registry::builtin(), "metal_clash_het_10", coarse());
  Rng rng(9);
  std::size_t after_two = 0;
  for (int ep = 0; ep < 30; ++ep) {
    sim.reset(static_cast<std::uint64_t>(ep));
    CHECK(sim.pool().total_live() == sim.state().agents.size() + sim.state().entities.size());
    for (int s = 0; s < 5 && !sim.state().done; ++s) sim.step(random_actions(sim, rng));
    if (ep == 1) after_two = sim.pool().total_high_water();
    if (ep > 1) CHECK(sim.pool().total_high_water() == after_two);
  }
  CHECK(sim.pool().agent_stats(AgentKind::LaserCar).high_water == 8);
  CHECK(sim.pool().agent_stats(AgentKind::SupportDrone).live == 4);

  ObjectPool pool;
  WorldState w;
  w.agents.push_back(pool.acquire_agent(AgentKind::Robot));
  w.agents.back().hp = 42;
  pool.release_all(w);
  CHECK(w.agents.empty());
  const AgentState recycled = pool.acquire_agent(AgentKind::Robot);
  CHECK(recycled.hp == 0.0);  // reinitialized
  CHECK(pool.agent_stats(AgentKind::Robot).high_water == 1);
}

TEST_CASE("metal clash damage is conserved") {
  Simulation sim(Registry::builtin(), "metal_clash_het_10", coarse());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    sim.reset(seed);
    Rng rng(seed + 100);
    while (!sim.state().done) {
      const WorldState before = sim.state();
      JointAction j;
      for (const auto& a : before.agents)
        if (a.alive) j[a.agent_id] = rng.uniform() < 0.7 ? metal_clash::kAttackNearest : static_cast<int>(rng.below(9));
      const StepOutcome out = sim.step(j);
      double dealt = 0.0, healed = 0.0;
      std::map<std::int32_t, double> per_target;
      for (const auto& e : out.events) {
        if (e.kind == EventKind::AttackLanded) {
          dealt += *e.magnitude;
          per_target[*e.object_id] += *e.magnitude;
        }
        if (e.kind == EventKind::HealApplied) healed += *e.magnitude;
      }
      double lost = 0.0, overkill = 0.0;
      for (std::size_t i = 0; i < before.agents.size(); ++i) {
        const double delta = before.agents[i].hp - sim.state().agents[i].hp;
        lost += delta;
        const auto it = per_target.find(before.agents[i].agent_id);
        if (it != per_target.end() && !sim.state().agents[i].alive) overkill += it->second - before.agents[i].hp;
      }
      CHECK(dealt == doctest::Approx(lost + healed + overkill).epsilon(1e-9));
    }
  }
}
