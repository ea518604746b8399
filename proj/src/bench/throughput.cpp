#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "umap/bench.hpp"
#include "umap/rng.hpp"
#include "umap/serialization.hpp"
#include "umap/simulation.hpp"

namespace umap {

using Clock = std::chrono::steady_clock;

std::uint64_t process_rss_bytes(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/statm");
  std::uint64_t size = 0, resident = 0;
  if (!(in >> size >> resident)) return 0;
  return resident * static_cast<std::uint64_t>(::sysconf(_SC_PAGESIZE));
}

std::uint64_t process_private_bytes(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/smaps_rollup");
  std::uint64_t total = 0;
  for (std::string key; in >> key;) {
    std::uint64_t kb = 0;
    if (key == "Private_Clean:" || key == "Private_Dirty:") {
      in >> kb;
      total += kb * 1024;
    }
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  }
  return total;
}

double process_cpu_seconds(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
  std::string line;
  if (!std::getline(in, line)) return 0.0;
  // The command name may contain spaces; fields resume after the last ')'.
  const auto close = line.rfind(')');
  if (close == std::string::npos) return 0.0;
  std::istringstream rest(line.substr(close + 2));
  std::string field;
  double utime = 0, stime = 0;
  for (int i = 3; i <= 15 && rest >> field; ++i) {
    if (i == 14) utime = std::stod(field);
    if (i == 15) stime = std::stod(field);
  }
  return (utime + stime) / static_cast<double>(::sysconf(_SC_CLK_TCK));
}

std::uint64_t bench_episode_seed(std::uint64_t base, int worker, std::uint64_t k) {
  return mix64(base ^ mix64((static_cast<std::uint64_t>(worker) << 40) + k + 0x62656e6368ULL));
}

namespace {

JointAction random_actions(const WorldState& w, const std::map<std::int32_t, int>& counts, std::uint64_t seed,
                           std::int32_t step) {
  Rng rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(step) + 1)));
  JointAction out;
  for (const auto& a : w.agents) {
    if (a.alive) out[a.agent_id] = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(counts.at(a.agent_id))));
  }
  return out;
}

std::map<std::int32_t, int> counts_of(const Scenario& scenario, const TaskSpec& task, const WorldState& w) {
  std::map<std::int32_t, int> counts;
  for (const auto& a : w.agents) counts[a.agent_id] = scenario.profile(a.kind, task).num_actions;
  return counts;
}

struct RepResult {
  double tps = 0.0;
  double cpu_busy = 0.0;
  double rss = 0.0;
  double private_bytes = 0.0;
  double wall = 0.0;
  std::uint64_t steps = 0;
  std::vector<BenchEpisode> episodes;
  std::string error;
};

// Worker processes shared by every sample of one worker count, so samples
// along the dilation axis differ only in dilation (not in what the parent's
// heap looked like when each worker was forked).
class BenchPool {
 public:
  BenchPool(const BenchOptions& opts, int workers)
      : opts_(opts),
        task_(Registry::builtin().task(opts.task)),
        scenario_(make_scenario(task_.scenario)),
        pool_([&] {
          PoolOptions po;
          po.workers = static_cast<std::size_t>(workers);
          po.transport = opts.transport;
          po.serve.factory = registry_factory(Registry::builtin());
          return po;
        }()) {}
  ~BenchPool() { pool_.shutdown(); }

  // Warm-up: one unpaced episode per worker, so resident memory is measured
  // at steady state rather than while the heap is still growing.
  std::string warm_up() {
    const TimeConfig t(opts_.decision_interval, opts_.frame_rate, TimeConfig::kUnpaced);
    if (auto e = configure(t, false); !e.empty()) return e;
    std::vector<std::string> errors(pool_.size());
    std::vector<std::thread> warm;
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      warm.emplace_back([&, i] {
        try {
          play(i, bench_episode_seed(opts_.seed, static_cast<int>(i), ~std::uint64_t{0}), Clock::time_point::max(),
               nullptr);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
    }
    for (auto& t : warm) t.join();
    for (const auto& e : errors)
      if (!e.empty()) return e;
    return {};
  }

  RepResult run_rep(double dilation, int rep) {
    RepResult out;
    out.error = configure(TimeConfig(opts_.decision_interval, opts_.frame_rate, dilation), true);
    if (!out.error.empty()) return out;

    const std::size_t n = pool_.size();
    std::vector<double> cpu0(n);
    for (std::size_t i = 0; i < n; ++i) cpu0[i] = process_cpu_seconds(pool_.pid(i));

    std::atomic<bool> stop{false};
    std::mutex mu;
    std::vector<double> rss_samples, private_samples;
    auto sample = [&] {
      for (std::size_t i = 0; i < n; ++i) {
        const auto rss = process_rss_bytes(pool_.pid(i));
        const auto priv = process_private_bytes(pool_.pid(i));
        std::lock_guard lock(mu);
        if (rss > 0) rss_samples.push_back(static_cast<double>(rss));
        if (priv > 0) private_samples.push_back(static_cast<double>(priv));
      }
    };
    std::vector<Progress> progress(n);
    std::vector<std::string> errors(n);

    const auto start = Clock::now();
    const auto deadline =
        start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(opts_.duration_s));
    std::vector<std::thread> drivers;
    for (std::size_t i = 0; i < n; ++i) {
      drivers.emplace_back([&, i] {
        // Each repetition plays a fresh block of episode indices.
        std::uint64_t k = static_cast<std::uint64_t>(rep) << 20;
        progress[i].t0 = Clock::now();
        try {
          while (Clock::now() < deadline) {
            play(i, bench_episode_seed(opts_.seed, static_cast<int>(i), k), deadline, &progress[i]);
            ++k;
          }
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
    }
    // 1 Hz memory sampler.
    std::thread sampler([&] {
      while (!stop.load()) {
        sample();
        for (int t = 0; t < 10 && !stop.load(); ++t) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    });
    for (auto& d : drivers) d.join();
    const double wall = std::chrono::duration<double>(Clock::now() - start).count();
    double cpu = 0.0;
    for (std::size_t i = 0; i < n; ++i) cpu += process_cpu_seconds(pool_.pid(i)) - cpu0[i];
    stop = true;
    sampler.join();
    sample();

    for (std::size_t i = 0; i < n; ++i) {
      if (!errors[i].empty()) {
        out.error = "worker " + std::to_string(i) + ": " + errors[i];
        return out;
      }
      if (progress[i].active_seconds > 0.0) out.tps += static_cast<double>(progress[i].steps) / progress[i].active_seconds;
      out.steps += progress[i].steps;
      for (const auto& e : progress[i].episodes) out.episodes.push_back(e);
    }
    const auto cores = std::max(1u, std::thread::hardware_concurrency());
    out.cpu_busy = cpu / (wall * cores);
    out.wall = wall;
    auto mean = [](const std::vector<double>& v) {
      double sum = 0.0;
      for (double x : v) sum += x;
      return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
    };
    out.rss = mean(rss_samples);
    out.private_bytes = mean(private_samples);
    return out;
  }

 private:
  struct Progress {
    Clock::time_point t0;
    std::uint64_t steps = 0;
    double active_seconds = 0.0;  // until the last completed step
    std::vector<BenchEpisode> episodes;
  };

  std::string configure(const TimeConfig& t, bool pacing) {
    const json conf = {{"task", opts_.task}, {"time", time_config_to_json(t)}, {"pacing", pacing}};
    for (const auto& r : pool_configure(pool_, std::vector<json>(pool_.size(), conf))) {
      if (!r.ok) return r.error;
    }
    return {};
  }

  // Plays one random-action episode on worker i until it ends or the deadline passes.
  void play(std::size_t i, std::uint64_t seed, Clock::time_point deadline, Progress* progress) {
    WorkerReply r = pool_.request(i, protocol::MessageKind::Reset, json{{"seed", seed}}.dump());
    if (!r.ok) throw std::runtime_error(r.error);
    json body = r.body();
    WorldState state = body.at("state").get<WorldState>();
    const auto counts = counts_of(*scenario_, task_, state);
    while (!state.done && Clock::now() < deadline) {
      const JointAction a = random_actions(state, counts, seed, state.episode_step);
      r = pool_.request(i, protocol::MessageKind::StepRequest, actions_body(a).dump());
      if (!r.ok) throw std::runtime_error(r.error);
      body = r.body();
      state = body.at("state").get<WorldState>();
      if (progress) {
        ++progress->steps;
        progress->active_seconds = std::chrono::duration<double>(Clock::now() - progress->t0).count();
      }
    }
    if (state.done && progress)
      progress->episodes.push_back({seed, std::stoull(body.at("digest").get<std::string>(), nullptr, 16)});
  }

  const BenchOptions& opts_;
  const TaskSpec& task_;
  std::shared_ptr<const Scenario> scenario_;
  WorkerPool pool_;
};

BenchSample measure_on(BenchPool& pool, const BenchOptions& opts, int workers, double dilation) {
  BenchSample s;
  s.workers = workers;
  s.dilation = dilation;
  s.reps = opts.reps;
  for (int rep = 0; rep < opts.reps; ++rep) {
    RepResult r = pool.run_rep(dilation, rep);
    if (!r.error.empty()) {
      s.valid = false;
      s.error = r.error;
      return s;
    }
    s.tps += r.tps;
    s.cpu_busy_fraction += r.cpu_busy;
    s.rss_bytes_per_worker += r.rss;
    s.private_bytes_per_worker += r.private_bytes;
    s.wall_seconds += r.wall;
    s.steps += r.steps;
    for (auto& e : r.episodes) s.episodes.push_back(e);
  }
  const double n = static_cast<double>(opts.reps);
  s.tps /= n;
  s.cpu_busy_fraction /= n;
  s.rss_bytes_per_worker /= n;
  s.private_bytes_per_worker /= n;
  return s;
}

void check_options(const BenchOptions& opts, int workers) {
  if (workers < 1) throw std::invalid_argument("bench needs at least one worker");
  if (opts.reps < 1) throw std::invalid_argument("bench needs at least one repetition");
}

BenchSample invalid(int workers, double dilation, int reps, std::string error) {
  BenchSample s;
  s.workers = workers;
  s.dilation = dilation;
  s.reps = reps;
  s.valid = false;
  s.error = std::move(error);
  return s;
}

}  // namespace

BenchEpisode bench_reference_episode(const BenchOptions& opts, int worker, std::uint64_t k) {
  const Registry& registry = Registry::builtin();
  Simulation sim(registry, opts.task, TimeConfig(opts.decision_interval, opts.frame_rate, TimeConfig::kUnpaced));
  sim.set_pacing(false);
  const std::uint64_t seed = bench_episode_seed(opts.seed, worker, k);
  sim.reset(seed);
  const auto counts = counts_of(sim.scenario(), sim.task(), sim.state());
  while (!sim.state().done) sim.step(random_actions(sim.state(), counts, seed, sim.state().episode_step));
  return {seed, sim.digest()};
}

BenchSample measure_tps(const BenchOptions& opts, int workers, double dilation) {
  check_options(opts, workers);
  BenchPool pool(opts, workers);
  if (auto e = pool.warm_up(); !e.empty()) return invalid(workers, dilation, opts.reps, e);
  return measure_on(pool, opts, workers, dilation);
}

std::vector<BenchSample> sweep(const BenchOptions& opts, const std::vector<int>& workers,
                               const std::vector<double>& dilations, const SampleCallback& on_sample) {
  if (workers.empty() || dilations.empty()) throw std::invalid_argument("bench sweep grid is empty");
  std::vector<BenchSample> out;
  for (int w : workers) {
    check_options(opts, w);
    BenchPool pool(opts, w);
    const std::string warm = pool.warm_up();
    for (double d : dilations) {
      out.push_back(warm.empty() ? measure_on(pool, opts, w, d) : invalid(w, d, opts.reps, warm));
      if (on_sample) on_sample(out.back());
    }
  }
  return out;
}

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(4) << x;
  return s.str();
}

}  // namespace

std::vector<TrendCheck> evaluate_trends(const std::vector<BenchSample>& samples) {
  std::map<int, std::vector<const BenchSample*>> by_workers;
  for (const auto& s : samples) {
    if (s.valid && !std::isinf(s.dilation)) by_workers[s.workers].push_back(&s);
  }
  for (auto& [w, v] : by_workers)
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->dilation < b->dilation; });

  std::vector<TrendCheck> out;

  TrendCheck mono{"tps_non_decreasing_in_dilation", true, ""};
  TrendCheck mem{"memory_flat_in_dilation", true, ""};
  bool any_axis = false;
  for (const auto& [w, v] : by_workers) {
    if (v.size() < 2) continue;
    any_axis = true;
    mono.detail += "workers=" + std::to_string(w) + " tps ratios:";
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double ratio = v[i - 1]->tps > 0 ? v[i]->tps / v[i - 1]->tps : 0.0;
      mono.detail += " " + fmt(ratio);
      if (v[i]->tps < v[i - 1]->tps * (1.0 - kPlateauTolerance)) mono.passed = false;
    }
    mono.detail += "; ";
    auto spread_of = [&](double BenchSample::*field) {
      double lo = v.front()->*field, hi = lo;
      for (auto* s : v) {
        lo = std::min(lo, s->*field);
        hi = std::max(hi, s->*field);
      }
      return lo > 0 ? (hi - lo) / lo : 1.0;
    };
    const double spread = spread_of(&BenchSample::rss_bytes_per_worker);
    mem.detail += "workers=" + std::to_string(w) + " rss spread " + fmt(spread) + " (private " +
                  fmt(spread_of(&BenchSample::private_bytes_per_worker)) + "); ";
    if (!(spread < kMemorySpread)) mem.passed = false;
  }
  if (!any_axis) {
    mono.passed = mem.passed = false;
    mono.detail = mem.detail = "no worker count has two paced dilations";
  }
  out.push_back(mono);
  out.push_back(mem);

  TrendCheck scale{"tps_scales_2_to_4_workers", false, ""};
  auto two = by_workers.find(2), four = by_workers.find(4);
  if (two == by_workers.end() || four == by_workers.end()) {
    scale.detail = "grid lacks 2 and 4 workers";
  } else {
    const BenchSample* a = nullptr;
    const BenchSample* b = nullptr;
    for (auto* x : two->second) {
      for (auto* y : four->second) {
        if (x->dilation == y->dilation && (!a || x->dilation < a->dilation)) {
          a = x;
          b = y;
        }
      }
    }
    if (!a) {
      scale.detail = "no shared dilation between 2 and 4 workers";
    } else {
      const double ratio = a->tps > 0 ? b->tps / a->tps : 0.0;
      scale.passed = ratio >= kScalingRatio;
      scale.detail = "dilation " + format_dilation(a->dilation) + ": tps " + fmt(a->tps) + " -> " + fmt(b->tps) +
                     " (x" + fmt(ratio) + ")";
    }
  }
  out.push_back(scale);
  return out;
}

void write_csv(std::ostream& out, const std::vector<BenchSample>& samples) {
  out << kBenchCsvHeader << '\n';
  for (const auto& s : samples) {
    const double per_rep = s.reps > 0 ? s.wall_seconds / s.reps : 0.0;
    out << s.workers << ',' << format_dilation(s.dilation) << ',' << s.reps << ',' << fmt(per_rep) << ','
        << std::setprecision(6) << s.tps << ',' << (s.workers > 0 ? s.tps / s.workers : 0.0) << ','
        << s.cpu_busy_fraction << ',' << std::setprecision(12) << s.rss_bytes_per_worker << ',' << s.private_bytes_per_worker << ',' << s.steps << ','
        << (s.valid ? 1 : 0) << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const std::vector<BenchSample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out, samples);
}

}  // namespace umap
