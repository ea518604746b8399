#include <doctest.h>

#include <cmath>

#include "test_support.hpp"

using namespace umap;
using namespace umap::testing;

namespace {

AgentState agent(std::int32_t id, std::int32_t team, AgentKind kind, Vec3 pos, double hp, double max_hp) {
  AgentState a;
  a.agent_id = id;
  a.team_id = team;
  a.kind = kind;
  a.position = pos;
  a.hp = hp;
  a.max_hp = max_hp;
  a.airborne = pos.z > 0;
  return a;
}

// Resolves one decision step of `scenario` on a hand-built world without
// moving anyone: decode on the current perception, then the final frame.
void resolve(const Scenario& scenario, WorldState& w, const TaskSpec& task, const MapSpec& map,
             const TimeConfig& time) {
  std::vector<PerceptionShape> shapes(w.agents.size(), Sphere{3000});
  const PerceptionMatrix m = build_matrix(w, shapes, false);
  StepContext ctx{task, map, time};
  scenario.decode_actions(w, m, ctx);
  ctx.frame_in_step = time.frames_per_decision();
  ctx.last_frame = true;
  scenario.on_frame(w, ctx);
}

double team_sum(const RewardMap& r, const WorldState& w, std::int32_t team) {
  double s = 0.0;
  for (const auto& a : w.agents)
    if (a.team_id == team) s += r.at(a.agent_id);
  return s;
}

Simulation two_laser_cars(AgentKind blue_kind) {
  const MapSpec map = small_map("pair", {{-200, 0, 0}, {200, 0, 0}});
  return Simulation(make_task("metal_clash", {{"red", {{AgentKind::LaserCar, 1}}, true}, {"blue", {{blue_kind, 1}}, false}},
                              map.id),
                    map, coarse());
}

}  // namespace

TEST_CASE("registry holds the example tasks") {
  const Registry& r = Registry::builtin();
  const TaskSpec& het = r.task("metal_clash_het_8_vs_10");
  REQUIRE(het.teams.size() == 2);
  CHECK(het.teams[0].members ==
        std::vector<std::pair<AgentKind, int>>{{AgentKind::LaserCar, 4}, {AgentKind::MissileCar, 2}, {AgentKind::SupportDrone, 2}});
  CHECK(het.teams[1].members ==
        std::vector<std::pair<AgentKind, int>>{{AgentKind::LaserCar, 4}, {AgentKind::MissileCar, 4}, {AgentKind::SupportDrone, 2}});

  const TaskSpec& hard = r.task("monster_crisis_hard");
  CHECK(hard.teams.at(0).size() == 8);
  CHECK(hard.override_or("monster_hp", 0) == 800.0);

  const TaskSpec& flags = r.task("flag_capture_2scripts_hard");
  REQUIRE(flags.teams.size() == 3);
  CHECK(flags.teams[0].size() == 10);
  CHECK(flags.teams[0].learnable);
  CHECK(flags.teams[1].size() == 15);
  CHECK_FALSE(flags.teams[1].learnable);
  CHECK(flags.teams[2].size() == 15);

  const char* table[] = {"metal_clash_5lc_5mc", "metal_clash_het_10", "metal_clash_het_8_vs_10",
                         "metal_clash_hom_50", "metal_clash_het_50", "metal_clash_het_100",
                         "monster_crisis_easy", "monster_crisis_medium", "monster_crisis_hard",
                         "flag_capture_1script", "flag_capture_2scripts", "flag_capture_2scripts_hard",
                         "navigation_game_5_vs_2", "navigation_game_4_vs_2", "navigation_game_3_vs_2"};
  for (const char* name : table) {
    CAPTURE(name);
    REQUIRE(r.has_task(name));
    const TaskSpec& t = r.task(name);
    CHECK(r.has_map(t.map_id));
    CHECK_NOTHROW(Simulation(r, name, coarse()));
  }
  CHECK(r.task("metal_clash_5lc_5mc").max_episode_steps == 125);
  CHECK(r.task("monster_crisis_easy").max_episode_steps == 100);
  CHECK_THROWS_AS(r.task("no_such_task"), std::out_of_range);
}

TEST_CASE("tasks register from data without code changes") {
  Registry r = Registry::builtin();
  r.merge_json_text(R"({"maps": [], "tasks": [{"name": "tiny_clash", "scenario": "metal_clash", "map": "twin_valley",
      "max_episode_steps": 10, "teams": [{"name": "a", "members": [["laser_car", 1]], "learnable": true},
                                         {"name": "b", "members": [["Missile-Car", 1]], "learnable": false}]}]})");
  REQUIRE(r.has_task("tiny_clash"));
  Simulation sim(r, "tiny_clash", coarse());
  CHECK(sim.reset(0).agents.size() == 2);
  CHECK_THROWS(r.merge_json_text(R"({"tasks": [{"name": "bad", "scenario": "chess", "map": "open_field",
      "teams": [{"name": "a", "members": [["laser_car", 1]]}]}]})"));
}

TEST_CASE("maps are interchangeable for a scenario") {
  const Registry& r = Registry::builtin();
  for (const char* map_id : {"open_field", "twin_valley"}) {
    Simulation sim(r.task("metal_clash_5lc_5mc"), r.map(map_id), coarse());
    sim.reset(4);
    Rng rng(4);
    for (int s = 0; s < 10 && !sim.state().done; ++s) CHECK_NOTHROW(sim.step(random_actions(sim, rng)));
  }
}

TEST_CASE("metal clash attacks") {
  // Laser car hits a ground foe in range for its attack power.
  Simulation ground = two_laser_cars(AgentKind::LaserCar);
  ground.reset(0);
  REQUIRE(distance(ground.state().agents[0].position, ground.state().agents[1].position) < 500);
  ground.step({{0, metal_clash::kAttackNearest}, {1, metal_clash::kIdle}});
  CHECK(ground.state().agents[1].hp == 99.0);
  CHECK(ground.state().agents[0].hp == 100.0);

  // Laser car cannot target a drone.
  Simulation air = two_laser_cars(AgentKind::SupportDrone);
  air.reset(0);
  const Vec3 start = air.state().agents[0].position;
  const auto out = air.step({{0, metal_clash::kAttackNearest}, {1, metal_clash::kIdle}});
  CHECK(air.state().agents[1].hp == 50.0);
  CHECK(out.events.empty());
  CHECK(air.state().agents[0].position == start);
  air.step({{0, metal_clash::kAttackWeakest}, {1, metal_clash::kIdle}});
  CHECK(air.state().agents[1].hp == 50.0);

  // Missile cars can hit drones.
  const MapSpec map = small_map("pair", {{-200, 0, 0}, {200, 0, 0}});
  Simulation mc(make_task("metal_clash", {{"red", {{AgentKind::MissileCar, 1}}, true},
                                          {"blue", {{AgentKind::SupportDrone, 1}}, false}},
                          map.id),
                map, coarse());
  mc.reset(0);
  mc.step({{0, metal_clash::kAttackNearest}, {1, metal_clash::kIdle}});
  CHECK(mc.state().agents[1].hp == 49.0);
}

TEST_CASE("drone heals one hp per step up to max") {
  const auto scenario = make_scenario("metal_clash");
  const MapSpec map = small_map("m", {{0, 0, 0}, {5000, 0, 0}});
  const TaskSpec task = make_task("metal_clash", {}, map.id);
  WorldState w;
  w.num_teams = 2;
  w.agents = {agent(0, 0, AgentKind::MissileCar, {0, 0, 0}, 90, 150),
              agent(1, 0, AgentKind::SupportDrone, {100, 0, kAirAltitude}, 50, 50),
              agent(2, 1, AgentKind::LaserCar, {2900, 0, 0}, 100, 100)};
  w.agents[1].params.support_range = 1700;
  w.agents[1].action = metal_clash::kHeal;
  resolve(*scenario, w, task, map, coarse());
  CHECK(w.agents[0].hp == 91.0);
  REQUIRE(w.pending_events.size() == 1);
  CHECK(w.pending_events[0] == Event{EventKind::HealApplied, 0, 1, 0, 1.0});

  w.agents[0].hp = 149.5;
  resolve(*scenario, w, task, map, coarse());
  CHECK(w.agents[0].hp == 150.0);
}

TEST_CASE("metal clash terminal rewards") {
  const auto scenario = make_scenario("metal_clash");
  const MapSpec map = small_map("m", {{0, 0, 0}, {500, 0, 0}});
  const TaskSpec task = make_task("metal_clash", {}, map.id);
  const TimeConfig time = coarse();
  const StepContext ctx{task, map, time};
  WorldState w;
  w.num_teams = 2;
  w.agents = {agent(0, 0, AgentKind::LaserCar, {}, 50, 100), agent(1, 1, AgentKind::LaserCar, {}, 50, 100)};
  w.done = true;
  w.winner = scenario->decide_winner(w, ctx);
  CHECK(w.winner == kOutcomeTie);
  RewardMap r = scenario->rewards(w, w, {}, ctx);
  CHECK(r.at(0) == -1.0);
  CHECK(r.at(1) == -1.0);

  w.agents[1].hp = 49;
  w.winner = scenario->decide_winner(w, ctx);
  CHECK(w.winner == 0);
  r = scenario->rewards(w, w, {}, ctx);
  CHECK(r.at(0) == 1.0);
  CHECK(r.at(1) == -1.0);
}

TEST_CASE("metal clash reward ledger") {
  Simulation sim(Registry::builtin(), "metal_clash_het_10", coarse());
  const auto task = sim.task();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto policies = policies_for(task, seed % 2 ? "scripted" : "random");
    const auto ptrs = raw(policies);
    const EpisodeResult ep = run_episode(sim, ptrs, seed, seed, true, seed);
    std::array<int, 2> lost{0, 0};
    for (const auto& a : sim.state().agents) lost[a.team_id] += !a.alive;
    for (std::int32_t t = 0; t < 2; ++t) {
      const double n = static_cast<double>(sim.state().team_members(t).size());
      const double terminal = ep.winner == t ? 1.0 : -1.0;
      const double expected = n * (0.1 * lost[1 - t] - 0.05 * lost[t] + terminal);
      CHECK(std::abs(ep.team_return[t] - expected) <= 1e-9);
    }
  }
}

TEST_CASE("monster crisis: kill pays every member once, nothing else pays") {
  const MapSpec map = small_map("den", {{120, 0, 0}}, {0, 0, 0});
  TaskSpec task = make_task("monster_crisis", {{"mushrooms", {{AgentKind::Mushroom, 8}}, true}}, map.id, 100);
  task.overrides["monster_hp"] = 400;
  Simulation sim(task, map, coarse());
  sim.reset(1);
  int steps = 0;
  StepOutcome out;
  do {
    out = sim.step(uniform_actions(sim.state(), monster_crisis::kCollide));
    ++steps;
    if (!out.done)
      for (const auto& [id, r] : out.rewards) CHECK(r == 0.0);
  } while (!out.done);
  CHECK(steps == 5);  // 8 mushrooms x 10 damage against 400 hp
  for (const auto& [id, r] : out.rewards) CHECK(r == 1.0);
  CHECK(sim.state().winner == 0);
  bool killed = false;
  for (const auto& e : out.events) killed = killed || e.kind == EventKind::MonsterKilled;
  CHECK(killed);
  for (const auto& a : sim.state().agents) CHECK(a.hp == 100.0 - 5 * rules::kMonsterDefenseDamage);
}

TEST_CASE("monster crisis: timeout pays nothing") {
  Simulation sim(Registry::builtin(), "monster_crisis_easy", coarse());
  sim.reset(3);
  StepOutcome out;
  int steps = 0;
  do {
    out = sim.step(uniform_actions(sim.state(), monster_crisis::kStay));
    ++steps;
    for (const auto& [id, r] : out.rewards) CHECK(r == 0.0);
  } while (!out.done);
  CHECK(steps == 100);
  CHECK(sim.state().winner == kOutcomeTie);
}

TEST_CASE("monster crisis maintain keeps the latched command") {
  Simulation sim(Registry::builtin(), "monster_crisis_easy", coarse());
  sim.reset(2);
  sim.step(uniform_actions(sim.state(), monster_crisis::kMoveEast));
  const double x0 = sim.state().agents[0].position.x;
  sim.step(uniform_actions(sim.state(), monster_crisis::kMaintain));
  CHECK(sim.state().agents[0].position.x == doctest::Approx(x0 + 150.0));
}

TEST_CASE("monster crisis episodes pay 0 or one per agent") {
  Simulation sim(Registry::builtin(), "monster_crisis_duo", coarse());
  int kills = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    sim.reset(seed);
    Rng rng(seed);
    double total = 0.0;
    while (!sim.state().done) {
      JointAction j;
      for (const auto& a : sim.state().agents)
        if (a.alive) j[a.agent_id] = rng.uniform() < 0.5 ? monster_crisis::kMoveEast : static_cast<int>(rng.below(7));
      for (const auto& [id, r] : sim.step(j).rewards) total += r;
    }
    CHECK((total == 0.0 || total == 2.0));
    kills += total == 2.0;
  }
  CHECK(kills > 0);
}

TEST_CASE("flag capture pickup, hold reward and tie-break") {
  const MapSpec map = small_map("flag", {{60, 0, 0}, {1500, 0, 0}}, {0, 0, 0});
  TaskSpec task = make_task("flag_capture", {{"a", {{AgentKind::Robot, 3}}, true}, {"b", {{AgentKind::Robot, 3}}, false}},
                            map.id, 10);
  task.overrides["robot.max_speed"] = 1.0;
  Simulation sim(task, map, coarse());
  sim.reset(0);
  const StepOutcome out = sim.step(uniform_actions(sim.state(), 0));
  bool picked = false;
  for (const auto& e : out.events) picked = picked || e.kind == EventKind::FlagPickedUp;
  CHECK(picked);
  for (const auto& a : sim.state().agents) CHECK(out.rewards.at(a.agent_id) == (a.team_id == 0 ? rules::kFlagHoldReward : 0.0));

  // Three robots of one team equidistant from the flag: lowest id holds.
  const auto scenario = make_scenario("flag_capture");
  WorldState w;
  w.num_teams = 1;
  w.team_counters = {0};
  w.agents = {agent(5, 0, AgentKind::Robot, {100, 0, 0}, 100, 100), agent(3, 0, AgentKind::Robot, {-100, 0, 0}, 100, 100),
              agent(4, 0, AgentKind::Robot, {0, 100, 0}, 100, 100)};
  EntityState flag;
  flag.entity_id = 10000;
  flag.kind = EntityKind::Flag;
  w.entities = {flag};
  const TimeConfig time = coarse();
  StepContext ctx{task, map, time, 15, true};
  scenario->on_frame(w, ctx);
  CHECK(w.entities[0].holder_id == 3);
  CHECK(w.team_counters[0] == 1);
}

TEST_CASE("flag transfers only to a strictly nearer rival") {
  const auto scenario = make_scenario("flag_capture");
  const MapSpec map = small_map("flag", {{0, 0, 0}, {0, 0, 0}});
  const TaskSpec task = make_task("flag_capture", {}, map.id);
  const TimeConfig time = coarse();
  StepContext ctx{task, map, time, 1, false};
  WorldState w;
  w.num_teams = 2;
  w.team_counters = {0, 0};
  w.agents = {agent(0, 0, AgentKind::Robot, {150, 0, 0}, 100, 100), agent(1, 1, AgentKind::Robot, {0, 180, 0}, 100, 100)};
  EntityState flag;
  flag.entity_id = 10000;
  flag.kind = EntityKind::Flag;
  w.entities = {flag};
  scenario->on_frame(w, ctx);
  CHECK(w.entities[0].holder_id == 0);
  w.agents[1].position = {0, 150, 0};  // equal distance: no transfer
  scenario->on_frame(w, ctx);
  CHECK(w.entities[0].holder_id == 0);
  w.agents[1].position = {0, 100, 0};
  scenario->on_frame(w, ctx);
  CHECK(w.entities[0].holder_id == 1);
  CHECK(w.entities[0].holder_team == 1);
  w.agents[1].position = {0, 500, 0};  // holder leaves the radius: dropped, then re-picked by team 0
  scenario->on_frame(w, ctx);
  CHECK(w.entities[0].holder_id == 0);
}

TEST_CASE("flag capture end of episode goes to the longest holder") {
  const auto scenario = make_scenario("flag_capture");
  const MapSpec map = small_map("flag", {{0, 0, 0}, {0, 0, 0}});
  const TaskSpec task = make_task("flag_capture", {}, map.id);
  const TimeConfig time = coarse();
  StepContext ctx{task, map, time};
  WorldState before;
  before.num_teams = 2;
  before.agents = {agent(0, 0, AgentKind::Robot, {}, 100, 100), agent(1, 0, AgentKind::Robot, {}, 100, 100),
                   agent(2, 1, AgentKind::Robot, {}, 100, 100)};
  before.team_counters = {59, 40};
  WorldState after = before;
  after.team_counters = {60, 40};
  after.done = true;
  after.winner = scenario->decide_winner(after, ctx);
  CHECK(after.winner == 0);
  const RewardMap r = scenario->rewards(before, after, {}, ctx);
  CHECK(r.at(0) == doctest::Approx(1.005));
  CHECK(r.at(1) == doctest::Approx(1.005));
  CHECK(r.at(2) == 0.0);

  after.team_counters = {40, 40};
  CHECK(scenario->decide_winner(after, ctx) == kOutcomeTie);
}

TEST_CASE("flag capture never changes hp") {
  Simulation sim(Registry::builtin(), "flag_capture_2scripts", coarse());
  Rng rng(1);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    sim.reset(seed);
    while (!sim.state().done) {
      sim.step(random_actions(sim, rng));
      for (const auto& a : sim.state().agents) REQUIRE(a.hp == a.max_hp);
    }
  }
}

TEST_CASE("navigation dense reward is zero-sum") {
  const auto scenario = make_scenario("navigation_game");
  const Registry& reg = Registry::builtin();
  const TaskSpec& task = reg.task("navigation_game_4_vs_2");
  const MapSpec& map = reg.map("navigation_arena");
  const TimeConfig time = coarse();
  StepContext ctx{task, map, time};
  WorldState w;
  w.num_teams = 2;
  w.team_counters = {0, 0};
  w.agents = {agent(0, 0, AgentKind::AirNavigator, {-3000, 5000, kAirAltitude}, 100, 100),
              agent(1, 0, AgentKind::AirNavigator, {3000, -5000, kAirAltitude}, 100, 100),
              agent(2, 0, AgentKind::GroundNavigator, {0, 0, 0}, 100, 100),
              agent(3, 1, AgentKind::GroundKeeper, {0, 0, 0}, 100, 100)};
  for (Vec3 l : map.landmarks) {
    EntityState e;
    e.entity_id = 10000 + static_cast<std::int32_t>(w.entities.size());
    e.kind = EntityKind::Landmark;
    e.position = l;
    w.entities.push_back(e);
  }
  const RewardMap r = scenario->rewards(w, w, {}, ctx);
  CHECK(r.at(0) == doctest::Approx(-0.5));
  CHECK(r.at(2) == doctest::Approx(-0.5));
  CHECK(r.at(3) == doctest::Approx(0.5));
  CHECK(team_sum(r, w, 0) / 3 + team_sum(r, w, 1) == 0.0);

  // A keeper in range resets a 9 s hold.
  w.agents[0].position = {-3000, 0, kAirAltitude};
  w.agents[0].hold_frames = 270;
  w.agents[3].position = {-3000, 100, 0};
  ctx.frame_in_step = 1;
  scenario->on_frame(w, ctx);
  CHECK(w.agents[0].hold_frames == 0);
  CHECK(w.agents[0].forced_frames == time.frames_per_decision());
}

TEST_CASE("navigation hold for ten seconds wins") {
  const Registry& reg = Registry::builtin();
  MapSpec map = reg.map("navigation_arena");
  map.spawn_regions = {Box{{-3000, 0, 0}, {20, 20, 0}}, Box{{3000, 3000, 0}, {20, 20, 0}}};
  const TaskSpec task = make_task("navigation_game", {{"nav", {{AgentKind::AirNavigator, 1}}, true},
                                                      {"keep", {{AgentKind::GroundKeeper, 1}}, false}},
                                  map.id, 150);
  Simulation sim(task, map, coarse());
  sim.reset(0);
  StepOutcome out;
  int steps = 0;
  do {
    out = sim.step({{0, navigation_game::kTowardLandmark}, {1, navigation_game::kIdle}});
    ++steps;
    CHECK(out.rewards.at(0) + out.rewards.at(1) == 0.0);
  } while (!out.done);
  CHECK(steps == 20);  // 10 s of 0.5 s steps
  CHECK(sim.state().winner == 0);
  CHECK(out.rewards.at(0) > 0.99);
  CHECK(out.rewards.at(1) < -0.99);
}

TEST_CASE("navigation episodes are zero-sum at every step") {
  Simulation sim(Registry::builtin(), "navigation_game_5_vs_2", coarse());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    sim.reset(seed);
    Rng rng(seed);
    while (!sim.state().done) {
      const RewardMap r = sim.step(random_actions(sim, rng)).rewards;
      const double nav = team_sum(r, sim.state(), 0) / 5.0;
      const double keep = team_sum(r, sim.state(), 1) / 2.0;
      REQUIRE(std::abs(nav + keep) < 1e-12);
    }
  }
}

TEST_CASE("win rate") {
  std::vector<std::int32_t> half(512, 1);
  for (int i = 0; i < 256; ++i) half[i] = 0;
  CHECK(win_rate(half, 0) == 0.5);
  const std::vector<std::int32_t> all(10, 0);
  CHECK(win_rate(all, 0) == 1.0);
  const std::vector<std::int32_t> ties{kOutcomeTie, 0, kOutcomeTie, kOutcomeTie};
  CHECK(win_rate(ties, 0) == 0.25);
  CHECK_THROWS(win_rate(std::vector<std::int32_t>{}, 0));
}

TEST_CASE("mirrored scripted teams win about equally") {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  auto policies = policies_for(sim.task(), "scripted");
  const auto ptrs = raw(policies);
  std::vector<std::int32_t> outcomes;
  for (std::uint64_t ep = 0; ep < 200; ++ep)
    outcomes.push_back(run_episode(sim, ptrs, episode_seed(99, ep), ep, false, 99, false).winner);
  const double red = win_rate(outcomes, 0);
  const double blue = win_rate(outcomes, 1);
  MESSAGE("red ", red, " blue ", blue);
  CHECK(red >= 0.35);
  CHECK(red <= 0.65);
  CHECK(blue >= 0.35);
  CHECK(blue <= 0.65);
}
