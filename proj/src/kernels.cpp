// Batched distance and visibility kernels. The serial versions are the
// reference; the OpenMP versions must produce bit-identical output, which holds
// because every output element is computed by the same expression in both.

#include <atomic>
#include <cmath>
#include <numbers>

#include <omp.h>

#include "umap/perception.hpp"

namespace umap::kernels {

namespace {

std::atomic<bool> g_parallel{true};

inline double pair_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline std::uint8_t pair_visible(const VisibilityInputs& in, std::span<const double> distances,
                                 std::size_t n, std::size_t a, std::size_t b) {
  if (!in.alive[a]) return 0;
  if (a == b) return 1;
  if (!in.alive[b]) return 0;
  const double d = distances[a * n + b];
  if (d > in.radius[a]) return 0;
  if (in.half_angle[a] < std::numbers::pi &&
      !cone_admits(in.headings[a], in.positions[b] - in.positions[a], d, in.half_angle[a]))
    return 0;
  if (in.occlusion && !line_of_sight(in.obstacles, in.positions[a], in.positions[b])) return 0;
  return 1;
}

}  // namespace

void set_parallel_enabled(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }
int max_threads() { return omp_get_max_threads(); }

namespace serial {

void pairwise_distances(std::span<const Vec3> positions, std::span<double> out) {
  const std::size_t n = positions.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) out[a * n + b] = pair_distance(positions[a], positions[b]);
  }
}

void visibility(const VisibilityInputs& in, std::span<const double> distances,
                std::span<std::uint8_t> out) {
  const std::size_t n = in.positions.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) out[a * n + b] = pair_visible(in, distances, n, a, b);
  }
}

}  // namespace serial

namespace parallel {

void pairwise_distances(std::span<const Vec3> positions, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(positions.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t b = 0; b < n; ++b) out[a * n + b] = pair_distance(positions[a], positions[b]);
  }
}

void visibility(const VisibilityInputs& in, std::span<const double> distances,
                std::span<std::uint8_t> out) {
  const auto n = static_cast<std::int64_t>(in.positions.size());
  // Rows cost differs with occlusion tests, hence dynamic scheduling.
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t b = 0; b < n; ++b)
      out[a * n + b] = pair_visible(in, distances, static_cast<std::size_t>(n),
                                    static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
}

}  // namespace parallel

}  // namespace umap::kernels
