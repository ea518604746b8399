#pragma once

// Brute-force reference for visibility, written independently of the kernels:
// cone angles via atan2 and occlusion via per-axis open-interval clipping.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "umap/perception.hpp"

namespace umap::testing {

inline bool oracle_visible(const AgentState& obs, const PerceptionShape& shape, const Vec3& target) {
  const double dx = target.x - obs.position.x, dy = target.y - obs.position.y, dz = target.z - obs.position.z;
  const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (const auto* cone = std::get_if<Cone>(&shape)) {
    if (d > cone->radius) return false;
    if (d == 0.0) return true;
    Vec3 h = obs.heading;
    if (h == Vec3{}) h = {1, 0, 0};
    const double cx = h.y * dz - h.z * dy, cy = h.z * dx - h.x * dz, cz = h.x * dy - h.y * dx;
    const double angle = std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), h.x * dx + h.y * dy + h.z * dz);
    return angle <= cone->half_angle;
  }
  return d <= std::get<Sphere>(shape).radius;
}

// Does the segment a->b pass through the open interior of the box?
inline bool oracle_blocked(const Box& box, const Vec3& a, const Vec3& b) {
  double t_lo = 0.0, t_hi = 1.0;
  const double p[3] = {a.x, a.y, a.z}, q[3] = {b.x, b.y, b.z};
  const double c[3] = {box.center.x, box.center.y, box.center.z}, h[3] = {box.half.x, box.half.y, box.half.z};
  for (int i = 0; i < 3; ++i) {
    const double lo = c[i] - h[i], hi = c[i] + h[i], v = q[i] - p[i];
    if (v == 0.0) {
      if (p[i] <= lo || p[i] >= hi) return false;
      continue;
    }
    // Open interval of t where lo < p + v t < hi.
    double e = (lo - p[i]) / v, f = (hi - p[i]) / v;
    if (e > f) std::swap(e, f);
    t_lo = std::max(t_lo, e);
    t_hi = std::min(t_hi, f);
    if (!(t_lo < t_hi)) return false;
  }
  return t_lo < t_hi;
}

// Dense sampling: is any of `samples` interior points of the segment strictly inside the box?
inline bool sampled_blocked(const Box& box, const Vec3& a, const Vec3& b, int samples = 1000) {
  for (int k = 0; k <= samples; ++k) {
    const double t = static_cast<double>(k) / samples;
    if (box.contains_interior(a + (b - a) * t)) return true;
  }
  return false;
}

inline std::vector<std::vector<bool>> oracle_matrix(const WorldState& w, const std::vector<PerceptionShape>& shapes,
                                                    bool occlusion) {
  const std::size_t n = w.agents.size();
  std::vector<Box> boxes;
  for (const auto& e : w.entities)
    if (e.kind == EntityKind::Obstacle && e.active) boxes.push_back({e.position, e.extent});
  std::vector<std::vector<bool>> m(n, std::vector<bool>(n, false));
  for (std::size_t a = 0; a < n; ++a) {
    if (!w.agents[a].alive) continue;
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) {
        m[a][b] = true;
        continue;
      }
      if (!w.agents[b].alive) continue;
      bool v = oracle_visible(w.agents[a], shapes[a], w.agents[b].position);
      if (v && occlusion)
        for (const auto& box : boxes) v = v && !oracle_blocked(box, w.agents[a].position, w.agents[b].position);
      m[a][b] = v;
    }
  }
  return m;
}

struct RandomScene {
  WorldState world;
  std::vector<PerceptionShape> shapes;
};

// n agents in a 6000 u square, a mix of ground and air, spheres and cones,
// ~10% dead, plus a few obstacle boxes.
inline RandomScene random_scene(std::size_t n, Rng& rng, int obstacles = 6) {
  RandomScene s;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState a;
    a.agent_id = static_cast<std::int32_t>(i);
    a.team_id = static_cast<std::int32_t>(rng.below(2));
    a.airborne = rng.uniform() < 0.2;
    a.position = {rng.uniform(-3000, 3000), rng.uniform(-3000, 3000), a.airborne ? kAirAltitude : 0.0};
    const double th = rng.uniform(0, 2 * std::numbers::pi);
    a.heading = {std::cos(th), std::sin(th), 0.0};
    a.max_hp = 100;
    a.alive = rng.uniform() >= 0.1;
    a.hp = a.alive ? 100 : 0;
    s.world.agents.push_back(a);
    const double radius = rng.uniform(500, 4000);
    if (rng.uniform() < 0.5)
      s.shapes.push_back(Sphere{radius});
    else
      s.shapes.push_back(Cone{radius, rng.uniform(0.1, std::numbers::pi)});
  }
  for (int k = 0; k < obstacles; ++k) {
    EntityState e;
    e.entity_id = 10000 + k;
    e.kind = EntityKind::Obstacle;
    e.position = {rng.uniform(-2500, 2500), rng.uniform(-2500, 2500), 300};
    e.extent = {rng.uniform(50, 600), rng.uniform(50, 600), 300};
    s.world.entities.push_back(e);
  }
  return s;
}

}  // namespace umap::testing
