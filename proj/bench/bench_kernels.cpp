// Serial vs OpenMP perception kernels.
#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "umap/perception.hpp"
#include "umap/rng.hpp"

namespace {

using namespace umap;

struct Scene {
  std::vector<Vec3> positions, headings;
  std::vector<std::uint8_t> alive;
  std::vector<double> radius, half_angle;
  std::vector<Box> obstacles;
  std::vector<double> distances;
  std::vector<std::uint8_t> out;

  explicit Scene(std::size_t n) {
    Rng rng(n);
    for (std::size_t i = 0; i < n; ++i) {
      positions.push_back({rng.uniform(-5000, 5000), rng.uniform(-5000, 5000), rng.uniform(0, 500)});
      const double a = rng.uniform(0, 2 * M_PI);
      headings.push_back({std::cos(a), std::sin(a), 0});
      alive.push_back(1);
      radius.push_back(2500);
      half_angle.push_back(i % 2 ? M_PI / 3 : M_PI);
    }
    for (int k = 0; k < 8; ++k) {
      const Vec3 c{rng.uniform(-4000, 4000), rng.uniform(-4000, 4000), 250};
      obstacles.push_back(Box{c, {300, 300, 250}});
    }
    distances.resize(n * n);
    out.resize(n * n);
  }
  kernels::VisibilityInputs inputs() const {
    return {positions, headings, alive, radius, half_angle, obstacles, true};
  }
};

template <bool Parallel>
void BM_distances(benchmark::State& state) {
  Scene s(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::pairwise_distances(s.positions, s.distances);
    } else {
      kernels::serial::pairwise_distances(s.positions, s.distances);
    }
    benchmark::DoNotOptimize(s.distances.data());
  }
}

template <bool Parallel>
void BM_visibility(benchmark::State& state) {
  Scene s(static_cast<std::size_t>(state.range(0)));
  kernels::serial::pairwise_distances(s.positions, s.distances);
  const auto in = s.inputs();
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::visibility(in, s.distances, s.out);
    } else {
      kernels::serial::visibility(in, s.distances, s.out);
    }
    benchmark::DoNotOptimize(s.out.data());
  }
}

}  // namespace

BENCHMARK(BM_distances<false>)->Arg(16)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_distances<true>)->Arg(16)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_visibility<false>)->Arg(16)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_visibility<true>)->Arg(16)->Arg(64)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
