#include "umap/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace umap {

void validate(const PerceptionShape& shape) {
  std::visit(
      [](const auto& s) {
        if (!(s.radius > 0.0)) throw std::invalid_argument("perception radius must be positive");
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Cone>) {
          if (!(s.half_angle > 0.0 && s.half_angle <= std::numbers::pi))
            throw std::invalid_argument("cone half angle must lie in (0, pi]");
        }
      },
      shape);
}

double shape_radius(const PerceptionShape& shape) {
  return std::visit([](const auto& s) { return s.radius; }, shape);
}

std::size_t PerceptionMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

DistanceMatrix pairwise_distances(std::span<const Vec3> positions) {
  DistanceMatrix m;
  m.n = positions.size();
  m.values.resize(m.n * m.n);
  if (kernels::parallel_enabled() && m.n >= kernels::kParallelThreshold) {
    kernels::parallel::pairwise_distances(positions, m.values);
  } else {
    kernels::serial::pairwise_distances(positions, m.values);
  }
  return m;
}

bool cone_admits(const Vec3& heading, const Vec3& offset, double dist, double half_angle) {
  if (dist == 0.0) return true;
  double hn = norm(heading);
  Vec3 h = heading;
  if (hn == 0.0) {
    h = {1.0, 0.0, 0.0};
    hn = 1.0;
  }
  const double c = std::clamp(dot(h, offset) / (hn * dist), -1.0, 1.0);
  return std::acos(c) <= half_angle;
}

bool visible(const AgentState& observer, const PerceptionShape& shape, const Vec3& target) {
  const double d = distance(observer.position, target);
  if (const auto* cone = std::get_if<Cone>(&shape)) {
    return d <= cone->radius &&
           cone_admits(observer.heading, target - observer.position, d, cone->half_angle);
  }
  return d <= std::get<Sphere>(shape).radius;
}

bool segment_blocked(const Box& box, const Vec3& a, const Vec3& b) {
  // Slab test against the open box; the segment parameter range is closed [0, 1].
  const double start[3] = {a.x, a.y, a.z};
  const double delta[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
  const double lo[3] = {box.center.x - box.half.x, box.center.y - box.half.y,
                        box.center.z - box.half.z};
  const double hi[3] = {box.center.x + box.half.x, box.center.y + box.half.y,
                        box.center.z + box.half.z};
  double enter = -std::numeric_limits<double>::infinity();
  double leave = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (delta[i] == 0.0) {
      if (!(start[i] > lo[i] && start[i] < hi[i])) return false;
      continue;
    }
    double t0 = (lo[i] - start[i]) / delta[i];
    double t1 = (hi[i] - start[i]) / delta[i];
    if (t0 > t1) std::swap(t0, t1);
    enter = std::max(enter, t0);
    leave = std::min(leave, t1);
  }
  return enter < leave && enter < 1.0 && leave > 0.0;
}

bool line_of_sight(std::span<const Box> obstacles, const Vec3& a, const Vec3& b) {
  for (const auto& box : obstacles) {
    if (segment_blocked(box, a, b)) return false;
  }
  return true;
}

std::vector<Box> obstacle_boxes(const WorldState& world) {
  std::vector<Box> boxes;
  for (const auto& e : world.entities) {
    if (e.kind == EntityKind::Obstacle && e.active) boxes.push_back({e.position, e.extent});
  }
  return boxes;
}

bool line_of_sight(const WorldState& world, const Vec3& a, const Vec3& b) {
  const auto boxes = obstacle_boxes(world);
  return line_of_sight(boxes, a, b);
}

PerceptionMatrix build_matrix(const WorldState& world, std::span<const PerceptionShape> shapes,
                              bool occlusion) {
  const std::size_t n = world.agents.size();
  if (shapes.size() != n) throw std::invalid_argument("one perception shape per agent required");

  std::vector<Vec3> positions(n);
  std::vector<Vec3> headings(n);
  std::vector<std::uint8_t> alive(n);
  std::vector<double> radius(n);
  std::vector<double> half_angle(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = world.agents[i];
    positions[i] = a.position;
    headings[i] = a.heading;
    alive[i] = a.alive ? 1 : 0;
    radius[i] = shape_radius(shapes[i]);
    const auto* cone = std::get_if<Cone>(&shapes[i]);
    half_angle[i] = cone ? cone->half_angle : std::numbers::pi;
  }
  const auto boxes = occlusion ? obstacle_boxes(world) : std::vector<Box>{};
  const kernels::VisibilityInputs in{positions, headings, alive, radius, half_angle, boxes,
                                     occlusion};

  const DistanceMatrix dist = pairwise_distances(positions);
  PerceptionMatrix matrix(n);
  if (kernels::parallel_enabled() && n >= kernels::kParallelThreshold) {
    kernels::parallel::visibility(in, dist.values, matrix.raw());
  } else {
    kernels::serial::visibility(in, dist.values, matrix.raw());
  }
  return matrix;
}

namespace {

int default_kind_slot(AgentKind kind) { return static_cast<int>(kind) % 3; }

void write_agent_features(std::span<double> out, const AgentState& observed,
                          const AgentState& observer, bool self, KindSlotFn kind_slot) {
  const auto id = observed.agent_id;
  out[0] = static_cast<double>(id % 16) / 16.0;
  out[1] = static_cast<double>((id / 16) % 16) / 16.0;
  out[2] = static_cast<double>(observed.team_id);
  out[3 + kind_slot(observed.kind)] = 1.0;
  const Vec3 pos = self ? observed.position : observed.position - observer.position;
  out[6] = pos.x;
  out[7] = pos.y;
  out[8] = pos.z;
  out[9] = observed.velocity.x;
  out[10] = observed.velocity.y;
  out[11] = observed.velocity.z;
  out[12] = observed.heading.x;
  out[13] = observed.heading.y;
  out[14] = observed.heading.z;
  out[15] = observed.hp / observed.max_hp;
  out[16] = observed.max_speed;
  out[17] = observed.params.attack_range;
  out[18] = observed.alive ? 1.0 : 0.0;
  out[19] = self ? 0.0 : distance(observed.position, observer.position);
  if (out.size() >= static_cast<std::size_t>(kDroneFeatureDim)) {
    out[20] = observed.kind == AgentKind::SupportDrone ? 1.0 : 0.0;
    out[21] = observed.params.support_range;
    out[22] = observed.position.z;
  }
}

void write_entity_features(std::span<double> out, const EntityState& e,
                           const AgentState& observer) {
  out[0] = static_cast<double>(e.entity_id % 16) / 16.0;
  out[1] = static_cast<double>((e.entity_id / 16) % 16) / 16.0;
  out[2] = -1.0;
  const Vec3 rel = e.position - observer.position;
  out[6] = rel.x;
  out[7] = rel.y;
  out[8] = rel.z;
  out[15] = e.max_hp > 0.0 ? e.hp / e.max_hp : 0.0;
  out[16] = static_cast<double>(e.holder_team);
  out[17] = e.extent.x;
  out[18] = e.active ? 1.0 : 0.0;
  out[19] = distance(e.position, observer.position);
}

}  // namespace

std::vector<double> assemble_observation(const WorldState& world, const PerceptionMatrix& matrix,
                                         std::size_t agent_index, const ObservationSpec& spec,
                                         KindSlotFn kind_slot) {
  if (!kind_slot) kind_slot = default_kind_slot;
  const auto fdim = static_cast<std::size_t>(spec.feature_dim);
  std::vector<double> obs(spec.dimension(), 0.0);
  const AgentState& self = world.agents[agent_index];
  if (!self.alive) return obs;

  auto slot = [&](std::size_t i) { return std::span<double>(obs).subspan(i * fdim, fdim); };
  write_agent_features(slot(0), self, self, true, kind_slot);

  struct Candidate {
    double dist_sq;
    std::int32_t id;
    std::size_t index;
  };
  std::vector<Candidate> allies;
  std::vector<Candidate> foes;
  for (std::size_t j = 0; j < world.agents.size(); ++j) {
    if (j == agent_index || !matrix(agent_index, j)) continue;
    const auto& other = world.agents[j];
    Candidate c{distance_sq(self.position, other.position), other.agent_id, j};
    (other.team_id == self.team_id ? allies : foes).push_back(c);
  }
  auto nearest_first = [](const Candidate& a, const Candidate& b) {
    return a.dist_sq != b.dist_sq ? a.dist_sq < b.dist_sq : a.id < b.id;
  };
  std::sort(allies.begin(), allies.end(), nearest_first);
  std::sort(foes.begin(), foes.end(), nearest_first);

  std::size_t next = 1;
  for (int k = 0; k < spec.n_ally; ++k, ++next) {
    if (static_cast<std::size_t>(k) < allies.size())
      write_agent_features(slot(next), world.agents[allies[k].index], self, false, kind_slot);
  }
  for (int k = 0; k < spec.n_foe; ++k, ++next) {
    if (static_cast<std::size_t>(k) < foes.size())
      write_agent_features(slot(next), world.agents[foes[k].index], self, false, kind_slot);
  }
  int filled = 0;
  for (const auto& e : world.entities) {
    if (filled == spec.n_entity) break;
    if (e.kind == EntityKind::Obstacle) continue;
    write_entity_features(slot(next++), e, self);
    ++filled;
  }
  return obs;
}

}  // namespace umap
