#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "umap/scenario.hpp"
#include "umap/server.hpp"

namespace umap {

struct BenchOptions {
  std::string task = "metal_clash_5lc_5mc";
  double duration_s = 10.0;  // wall time per repetition
  int reps = 3;
  double decision_interval = 0.5;
  double frame_rate = 2560.0;
  std::uint64_t seed = 0;
  Transport transport = Transport::Tcp;
};

struct BenchEpisode {
  std::uint64_t seed = 0;
  std::uint64_t digest = 0;
};

struct BenchSample {
  int workers = 0;
  double dilation = 1.0;
  int reps = 0;
  double tps = 0.0;                // decision steps per real second, summed over workers
  double cpu_busy_fraction = 0.0;  // worker CPU time / (wall * logical cores)
  double rss_bytes_per_worker = 0.0;
  // Private (unshared) resident bytes: what the worker itself costs, without
  // code pages and copy-on-write pages shared with the parent.
  double private_bytes_per_worker = 0.0;
  double wall_seconds = 0.0;       // summed over repetitions
  std::uint64_t steps = 0;
  bool valid = true;
  std::string error;
  std::vector<BenchEpisode> episodes;  // completed episodes, for digest checks
};

// Runs `workers` forked worker processes stepping `task` with random actions
// at the given dilation, paced, for opts.reps repetitions of opts.duration_s.
BenchSample measure_tps(const BenchOptions& opts, int workers, double dilation);

// Seed and policy stream of bench episode `k` on worker `w`.
std::uint64_t bench_episode_seed(std::uint64_t base, int worker, std::uint64_t k);
// Plays the same random-action episode in-process, unpaced.
BenchEpisode bench_reference_episode(const BenchOptions& opts, int worker, std::uint64_t k);

// One warmed-up pool per worker count, reconfigured for each dilation.
using SampleCallback = std::function<void(const BenchSample&)>;
std::vector<BenchSample> sweep(const BenchOptions& opts, const std::vector<int>& workers,
                               const std::vector<double>& dilations, const SampleCallback& on_sample = {});

struct TrendCheck {
  std::string name;
  bool passed = false;
  std::string detail;  // measured slopes / ratios
};

// Paced TPS non-decreasing along dilation (per worker count, within
// kPlateauTolerance), per-worker resident memory spread under 10% along
// dilation, and TPS(4 workers) >= 1.8 x TPS(2 workers) at the lowest shared
// dilation.
inline constexpr double kPlateauTolerance = 0.05;
inline constexpr double kMemorySpread = 0.10;
inline constexpr double kScalingRatio = 1.8;
std::vector<TrendCheck> evaluate_trends(const std::vector<BenchSample>& samples);

inline const char* kBenchCsvHeader =
    "workers,dilation,reps,duration_s,tps,tps_per_worker,cpu_busy_fraction,rss_bytes_per_worker,"
    "private_bytes_per_worker,steps,valid";
void write_csv(std::ostream& out, const std::vector<BenchSample>& samples);
void write_csv(const std::filesystem::path& path, const std::vector<BenchSample>& samples);

// Resident set size, private resident bytes and CPU seconds (user + system)
// of a process, from /proc.
std::uint64_t process_rss_bytes(int pid);
std::uint64_t process_private_bytes(int pid);
double process_cpu_seconds(int pid);

}  // namespace umap
