#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "umap/vec3.hpp"
#include "umap/world.hpp"

namespace umap {

struct Sphere {
  double radius = 0.0;
  bool operator==(const Sphere&) const = default;
};

// Cone around the agent's heading.
struct Cone {
  double radius = 0.0;
  double half_angle = 0.0;  // radians, (0, pi]
  bool operator==(const Cone&) const = default;
};

using PerceptionShape = std::variant<Sphere, Cone>;

// Throws std::invalid_argument for radius <= 0 or half_angle outside (0, pi].
void validate(const PerceptionShape& shape);
double shape_radius(const PerceptionShape& shape);

// Row-major n x n, bits(a, b) == observer a perceives agent b.
class PerceptionMatrix {
 public:
  PerceptionMatrix() = default;
  explicit PerceptionMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t a, std::size_t b) const { return bits_[a * n_ + b] != 0; }
  void set(std::size_t a, std::size_t b, bool v) { bits_[a * n_ + b] = v ? 1 : 0; }
  std::span<std::uint8_t> raw() { return bits_; }
  std::span<const std::uint8_t> raw() const { return bits_; }
  std::size_t count() const;

  bool operator==(const PerceptionMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Symmetric n x n Euclidean distance matrix, row-major.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;
  double operator()(std::size_t a, std::size_t b) const { return values[a * n + b]; }
};

DistanceMatrix pairwise_distances(std::span<const Vec3> positions);

// True when the offset (at distance `dist`) lies inside the cone around `heading`.
bool cone_admits(const Vec3& heading, const Vec3& offset, double dist, double half_angle);

bool visible(const AgentState& observer, const PerceptionShape& shape, const Vec3& target);

// False iff the open segment a->b passes through the interior of an obstacle
// box. Touching a face or an edge does not block.
bool segment_blocked(const Box& box, const Vec3& a, const Vec3& b);
bool line_of_sight(std::span<const Box> obstacles, const Vec3& a, const Vec3& b);
bool line_of_sight(const WorldState& world, const Vec3& a, const Vec3& b);
std::vector<Box> obstacle_boxes(const WorldState& world);

// Batched visibility over all agent pairs. shapes[i] belongs to world.agents[i].
// Output is identical whether the serial or OpenMP kernel runs.
PerceptionMatrix build_matrix(const WorldState& world, std::span<const PerceptionShape> shapes,
                              bool occlusion);

// Observation structure [1, n_ally, n_foe] plus optional global entity slots.
struct ObservationSpec {
  int n_ally = 0;
  int n_foe = 0;
  int n_entity = 0;
  int feature_dim = 20;
  double range = 0.0;

  std::size_t slots() const { return static_cast<std::size_t>(1 + n_ally + n_foe + n_entity); }
  std::size_t dimension() const { return slots() * static_cast<std::size_t>(feature_dim); }
  bool operator==(const ObservationSpec&) const = default;
};

// Features of one observed object. Layout version 1, 20 base features:
//   [0..1]   id hash: (id % 16) / 16, (id / 16 % 16) / 16
//   [2]      team id (-1 for entities)
//   [3..5]   kind one-hot over the scenario's kind slots
//   [6..8]   position (absolute for the self slot, relative to observer otherwise)
//   [9..11]  velocity
//   [12..14] heading
//   [15]     hp / max_hp
//   [16]     max speed
//   [17]     attack range
//   [18]     alive
//   [19]     distance to observer
// The 23-wide drone layout appends [heal capacity, support range, altitude].
inline constexpr int kFeatureLayoutVersion = 1;
inline constexpr int kBaseFeatureDim = 20;
inline constexpr int kDroneFeatureDim = 23;

// Maps an agent kind to its one-hot slot (0..2) within a scenario.
using KindSlotFn = int (*)(AgentKind);

// [self | nearest perceived allies | nearest perceived foes | entities].
// Nearest-k by squared distance, ties by ascending agent id; unused slots zero.
std::vector<double> assemble_observation(const WorldState& world, const PerceptionMatrix& matrix,
                                         std::size_t agent_index, const ObservationSpec& spec,
                                         KindSlotFn kind_slot = nullptr);

namespace kernels {

// Inputs to the batched visibility kernel in structure-of-arrays form.
struct VisibilityInputs {
  std::span<const Vec3> positions;
  std::span<const Vec3> headings;
  std::span<const std::uint8_t> alive;
  std::span<const double> radius;
  std::span<const double> half_angle;  // >= pi means sphere
  std::span<const Box> obstacles;
  bool occlusion = false;
};

namespace serial {
void pairwise_distances(std::span<const Vec3> positions, std::span<double> out);
void visibility(const VisibilityInputs& in, std::span<const double> distances,
                std::span<std::uint8_t> out);
}  // namespace serial

namespace parallel {
void pairwise_distances(std::span<const Vec3> positions, std::span<double> out);
void visibility(const VisibilityInputs& in, std::span<const double> distances,
                std::span<std::uint8_t> out);
}  // namespace parallel

// Global switch; worker processes forked from a multithreaded parent turn the
// OpenMP path off because the runtime's thread pool does not survive fork().
void set_parallel_enabled(bool enabled);
bool parallel_enabled();
// Agent counts below this always use the serial kernels.
inline constexpr std::size_t kParallelThreshold = 64;
int max_threads();

}  // namespace kernels

}  // namespace umap
