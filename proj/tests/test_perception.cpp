#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "perception_oracle.hpp"
#include "test_support.hpp"

using namespace umap;
using namespace umap::testing;

namespace {

AgentState at(Vec3 p, Vec3 heading = {1, 0, 0}) {
  AgentState a;
  a.position = p;
  a.heading = heading;
  a.hp = a.max_hp = 100;
  return a;
}

kernels::VisibilityInputs inputs_of(const RandomScene& s, std::vector<Vec3>& pos, std::vector<Vec3>& head,
                                    std::vector<std::uint8_t>& alive, std::vector<double>& radius,
                                    std::vector<double>& half, std::vector<Box>& boxes) {
  for (std::size_t i = 0; i < s.world.agents.size(); ++i) {
    const auto& a = s.world.agents[i];
    pos.push_back(a.position);
    head.push_back(a.heading);
    alive.push_back(a.alive ? 1 : 0);
    radius.push_back(shape_radius(s.shapes[i]));
    const auto* cone = std::get_if<Cone>(&s.shapes[i]);
    half.push_back(cone ? cone->half_angle : std::numbers::pi);
  }
  boxes = obstacle_boxes(s.world);
  return {pos, head, alive, radius, half, boxes, true};
}

}  // namespace

TEST_CASE("pairwise distances") {
  const std::vector<Vec3> two{{0, 0, 0}, {3, 4, 0}};
  const DistanceMatrix m = pairwise_distances(two);
  CHECK(m(0, 1) == 5.0);
  CHECK(m(1, 0) == 5.0);
  CHECK(m(0, 0) == 0.0);

  const std::vector<Vec3> one{{7, 8, 9}};
  const DistanceMatrix single = pairwise_distances(one);
  REQUIRE(single.n == 1);
  CHECK(single(0, 0) == 0.0);

  Rng rng(4);
  for (std::size_t n : {64u, 200u}) {
    std::vector<Vec3> pos;
    for (std::size_t i = 0; i < n; ++i) pos.push_back({rng.uniform(-5e3, 5e3), rng.uniform(-5e3, 5e3), rng.uniform(0, 500)});
    const DistanceMatrix d = pairwise_distances(pos);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        const double dx = pos[a].x - pos[b].x, dy = pos[a].y - pos[b].y, dz = pos[a].z - pos[b].z;
        REQUIRE(std::abs(d(a, b) - std::sqrt(dx * dx + dy * dy + dz * dz)) <= 1e-9);
        REQUIRE(d(a, b) == d(b, a));
      }
  }
}

TEST_CASE("sphere and cone visibility") {
  CHECK(visible(at({0, 0, 0}), Sphere{2500}, {2400, 0, 0}));
  CHECK_FALSE(visible(at({0, 0, 0}), Sphere{2000}, {2100, 0, 0}));
  CHECK(visible(at({0, 0, 0}), Sphere{2000}, {2000, 0, 0}));  // boundary inclusive

  const Cone cone{1000, std::numbers::pi / 4};
  CHECK(visible(at({0, 0, 0}), cone, {500, 0, 0}));
  CHECK_FALSE(visible(at({0, 0, 0}), cone, {-500, 0, 0}));
  CHECK(visible(at({0, 0, 0}), cone, {400, 390, 0}));
  CHECK_FALSE(visible(at({0, 0, 0}), cone, {390, 400, 0}));
  CHECK_FALSE(visible(at({0, 0, 0}), cone, {2000, 0, 0}));
  CHECK(visible(at({0, 0, 0}), Cone{1000, std::numbers::pi}, {-500, 0, 0}));
}

TEST_CASE("shape validation") {
  CHECK_NOTHROW(validate(Sphere{1}));
  CHECK_THROWS_AS(validate(Sphere{0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Cone{10, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Cone{10, 4.0}), std::invalid_argument);
  CHECK_NOTHROW(validate(Cone{10, std::numbers::pi}));
}

TEST_CASE("line of sight") {
  const std::vector<Box> none;
  CHECK(line_of_sight(none, {0, 0, 0}, {1000, 0, 0}));
  const std::vector<Box> unit{Box{{5, 0, 0}, {0.5, 0.5, 0.5}}};
  CHECK_FALSE(line_of_sight(unit, {0, 0, 0}, {10, 0, 0}));
  CHECK(line_of_sight(unit, {0, 1, 0}, {10, 1, 0}));
  CHECK(line_of_sight(unit, {0, 0.5, 0}, {10, 0.5, 0}));  // grazing a face does not block
  CHECK(line_of_sight(unit, {0, 0, 0}, {4.5, 0, 0}));     // ends on the face

  Rng rng(12);
  int disagreements = 0;
  for (int k = 0; k < 100; ++k) {
    const Box box{{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)},
                  {rng.uniform(1, 40), rng.uniform(1, 40), rng.uniform(1, 40)}};
    const Vec3 a{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec3 b{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const bool blocked = segment_blocked(box, a, b);
    CHECK(blocked == oracle_blocked(box, a, b));
    // Sampling can only miss very short chords; it never reports a false hit.
    if (blocked != sampled_blocked(box, a, b)) {
      ++disagreements;
      CHECK(blocked);
    }
  }
  CHECK(disagreements <= 2);
}

TEST_CASE("matrix basics") {
  WorldState w;
  w.agents = {at({0, 0, 0}), at({100, 0, 0}), at({5000, 0, 0})};
  for (std::size_t i = 0; i < 3; ++i) w.agents[i].agent_id = static_cast<std::int32_t>(i);
  const std::vector<PerceptionShape> shapes(3, Sphere{200});
  PerceptionMatrix m = build_matrix(w, shapes, false);
  CHECK(m(0, 1));
  CHECK(m(1, 0));
  CHECK_FALSE(m(0, 2));
  for (std::size_t i = 0; i < 3; ++i) CHECK(m(i, i));

  w.agents[1].alive = false;
  m = build_matrix(w, shapes, false);
  for (std::size_t j = 0; j < 3; ++j) CHECK_FALSE(m(1, j));
  CHECK_FALSE(m(0, 1));  // dead agents are not perceived
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  Rng rng(21);
  for (std::size_t n : {16u, 64u, 257u}) {
    const RandomScene s = random_scene(n, rng);
    std::vector<Vec3> pos, head;
    std::vector<std::uint8_t> alive;
    std::vector<double> radius, half;
    std::vector<Box> boxes;
    const auto in = inputs_of(s, pos, head, alive, radius, half, boxes);
    std::vector<double> ds(n * n), dp(n * n);
    kernels::serial::pairwise_distances(pos, ds);
    kernels::parallel::pairwise_distances(pos, dp);
    CHECK(ds == dp);
    std::vector<std::uint8_t> vs(n * n), vp(n * n);
    kernels::serial::visibility(in, ds, vs);
    kernels::parallel::visibility(in, ds, vp);
    CHECK(vs == vp);
  }
}

TEST_CASE("build_matrix equals the brute-force oracle") {
  Rng rng(33);
  for (int world = 0; world < 40; ++world) {
    const std::size_t n = 2 + rng.below(63);
    const RandomScene s = random_scene(n, rng);
    for (bool occlusion : {false, true}) {
      const PerceptionMatrix m = build_matrix(s.world, s.shapes, occlusion);
      const auto oracle = oracle_matrix(s.world, s.shapes, occlusion);
      std::size_t mismatches = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) mismatches += m(a, b) != oracle[a][b];
      CHECK(mismatches == 0);
    }
  }
  // Identical spheres see each other symmetrically.
  RandomScene s = random_scene(50, rng, 0);
  std::fill(s.shapes.begin(), s.shapes.end(), PerceptionShape{Sphere{1500}});
  const PerceptionMatrix m = build_matrix(s.world, s.shapes, false);
  for (std::size_t a = 0; a < 50; ++a)
    for (std::size_t b = 0; b < 50; ++b)
      if (s.world.agents[a].alive && s.world.agents[b].alive) CHECK(m(a, b) == m(b, a));
}

TEST_CASE("parallel switch does not change results") {
  Rng rng(5);
  const RandomScene s = random_scene(300, rng);
  kernels::set_parallel_enabled(true);
  const PerceptionMatrix on = build_matrix(s.world, s.shapes, true);
  kernels::set_parallel_enabled(false);
  const PerceptionMatrix off = build_matrix(s.world, s.shapes, true);
  kernels::set_parallel_enabled(true);
  CHECK(on == off);
}

TEST_CASE("observation dimensions per kind") {
  Simulation mc(Registry::builtin(), "metal_clash_het_10", coarse());
  mc.reset(1);
  for (std::size_t i = 0; i < mc.state().agents.size(); ++i) {
    const AgentKind k = mc.state().agents[i].kind;
    const std::size_t expected = k == AgentKind::LaserCar ? 220 : k == AgentKind::MissileCar ? 340 : 483;
    CHECK(mc.observation_spec(i).dimension() == expected);
    CHECK(mc.observation(i).size() == expected);
  }
  // Constant over an episode, including after death.
  Rng rng(2);
  while (!mc.state().done) {
    mc.step(random_actions(mc, rng));
    for (std::size_t i = 0; i < mc.state().agents.size(); ++i)
      CHECK(mc.observation(i).size() == mc.observation_spec(i).dimension());
  }
}

TEST_CASE("observation layout and zero fill") {
  WorldState w;
  // Observer 0 (team 0), allies 1 and 2 at 300 and 100, foe 3 at 200, far ally 4 out of range.
  w.agents = {at({0, 0, 0}), at({300, 0, 0}), at({0, 100, 0}), at({-200, 0, 0}), at({9000, 0, 0})};
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    w.agents[i].agent_id = static_cast<std::int32_t>(i);
    w.agents[i].team_id = i == 3 ? 1 : 0;
  }
  const std::vector<PerceptionShape> shapes(w.agents.size(), Sphere{1000});
  const PerceptionMatrix m = build_matrix(w, shapes, false);
  const ObservationSpec spec{3, 2, 0, kBaseFeatureDim, 1000};
  const auto obs = assemble_observation(w, m, 0, spec);
  REQUIRE(obs.size() == 6 * 20);
  auto slot = [&](int k) { return std::vector<double>(obs.begin() + k * 20, obs.begin() + (k + 1) * 20); };
  CHECK(slot(1)[7] == 100.0);   // nearest ally first: agent 2, relative y
  CHECK(slot(1)[19] == 100.0);
  CHECK(slot(2)[6] == 300.0);   // then agent 1
  CHECK(slot(2)[15] == 1.0);
  const std::vector<double> zeros(20, 0.0);
  CHECK(slot(3) == zeros);      // third ally slot unfilled
  CHECK(slot(4)[6] == -200.0);  // the foe
  CHECK(slot(4)[2] == 1.0);
  CHECK(slot(5) == zeros);

  w.agents[0].alive = false;
  const auto dead = assemble_observation(w, build_matrix(w, shapes, false), 0, spec);
  CHECK(std::all_of(dead.begin(), dead.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("nearest-k ties break by ascending id") {
  WorldState w;
  w.agents = {at({0, 0, 0}), at({100, 0, 0}), at({-100, 0, 0}), at({0, 100, 0})};
  for (std::size_t i = 0; i < w.agents.size(); ++i) w.agents[i].agent_id = static_cast<std::int32_t>(i);
  const std::vector<PerceptionShape> shapes(4, Sphere{1000});
  const ObservationSpec spec{2, 0, 0, kBaseFeatureDim, 1000};
  const auto obs = assemble_observation(w, build_matrix(w, shapes, false), 0, spec);
  CHECK(obs[20 + 0] == 1.0 / 16.0);  // agent 1
  CHECK(obs[40 + 0] == 2.0 / 16.0);  // agent 2; agent 3 dropped
}
