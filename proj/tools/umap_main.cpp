// umap: train, evaluate, replay, benchmark or serve multi-agent worlds.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "umap/bench.hpp"
#include "umap/orchestrator.hpp"
#include "umap/serialization.hpp"
#include "umap/trace.hpp"

using namespace umap;

namespace {

struct Args {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  std::optional<std::string> dilation;
  std::optional<double> frame_rate;
  std::optional<double> decision_interval;
  std::optional<std::string> transport;
  std::string task;
  std::string trace;
  std::string checkpoint;
  std::vector<std::string> sweep;
  std::string out = "bench.csv";
  double duration = 10.0;
  int reps = 3;
  int port = 0;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

TimeConfig apply_time(TimeConfig t, const Args& a) {
  return TimeConfig(a.decision_interval.value_or(t.decision_interval()), a.frame_rate.value_or(t.baseline_frame_rate()),
                    a.dilation ? parse_dilation(*a.dilation) : t.dilation_factor());
}

ExperimentConfig load(const Args& a) {
  ExperimentConfig cfg = load_config_file(a.config);
  if (a.seed) cfg.core.seed = *a.seed;
  if (a.parallel) {
    if (*a.parallel < 1) throw ConfigError("--parallel must be at least 1");
    cfg.core.parallel_envs = *a.parallel;
  }
  if (a.transport) cfg.core.transport = transport_from_string(*a.transport);
  cfg.mission.time = apply_time(cfg.mission.time, a);
  return cfg;
}

void print_eval(const ExperimentConfig& cfg, const EvalPoint& p) {
  const TaskSpec& task = cfg.registry.task(cfg.mission.task);
  std::printf("eval @%llu:", static_cast<unsigned long long>(p.episode));
  for (std::size_t t = 0; t < p.win_rate.size(); ++t)
    std::printf(" %s win_rate=%.4f mean_return=%.4f", task.teams[t].name.c_str(), p.win_rate[t], p.mean_return[t]);
  std::printf("\n");
}

int run_train(const Args& a) {
  const ExperimentConfig cfg = load(a);
  const RunResult r = run_training(cfg);
  for (const auto& p : r.evals) print_eval(cfg, p);
  std::printf("trained %llu episodes; run directory %s\n", static_cast<unsigned long long>(r.episodes),
              r.run_dir.string().c_str());
  return 0;
}

int run_eval(const Args& a) {
  const ExperimentConfig cfg = load(a);
  std::optional<json> checkpoint;
  if (!a.checkpoint.empty()) {
    std::ifstream in(a.checkpoint);
    if (!in) throw std::runtime_error("cannot open checkpoint " + a.checkpoint);
    checkpoint = json::parse(in);
  }
  print_eval(cfg, run_evaluation(cfg, checkpoint));
  return 0;
}

int run_replay(const Args& a) {
  std::string path = a.trace;
  Registry registry = Registry::builtin();
  if (!a.config.empty()) {
    const ExperimentConfig cfg = load(a);
    registry = cfg.registry;
    if (path.empty() && cfg.mission.trace) path = cfg.mission.trace->string();
  }
  if (path.empty()) throw std::runtime_error("replay needs --trace or mission.trace");
  const Trace trace = read_trace(path);
  const ReplayResult r = replay(registry, trace);
  std::printf("replay %s: %zu steps, digest %s, %s\n", path.c_str(), r.steps, digest_hex(r.digest).c_str(),
              r.matches ? "matches recording" : "DIVERGES");
  if (!r.matches) std::printf("first divergence at step %zu\n", r.first_divergence);
  return r.matches ? 0 : 1;
}

int run_bench(const Args& a) {
  BenchOptions opts;
  if (!a.config.empty()) {
    const ExperimentConfig cfg = load(a);
    opts.task = cfg.mission.task;
    opts.seed = cfg.core.seed;
    opts.transport = cfg.core.transport;
  }
  if (!a.task.empty()) opts.task = a.task;
  if (a.seed) opts.seed = *a.seed;
  if (a.transport) opts.transport = transport_from_string(*a.transport);
  if (a.decision_interval) opts.decision_interval = *a.decision_interval;
  if (a.frame_rate) opts.frame_rate = *a.frame_rate;
  opts.duration_s = a.duration;
  opts.reps = a.reps;

  std::vector<int> workers{a.parallel.value_or(1)};
  std::vector<double> dilations{a.dilation ? parse_dilation(*a.dilation) : 1.0};
  for (const auto& axis : a.sweep) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--sweep expects axis=v1,v2,...: " + axis);
    const std::string name = axis.substr(0, eq);
    const auto values = split(axis.substr(eq + 1), ',');
    if (values.empty()) throw std::invalid_argument("--sweep axis " + name + " has no values");
    if (name == "workers") {
      workers.clear();
      for (const auto& v : values) workers.push_back(std::stoi(v));
    } else if (name == "dilation") {
      dilations.clear();
      for (const auto& v : values) dilations.push_back(parse_dilation(v));
    } else {
      throw std::invalid_argument("unknown sweep axis '" + name + "'");
    }
  }
  const auto samples = sweep(opts, workers, dilations, [](const BenchSample& s) {
    std::printf("workers=%d dilation=%s tps=%.3f cpu=%.3f rss/worker=%.0f private/worker=%.0f%s\n", s.workers,
                format_dilation(s.dilation).c_str(), s.tps, s.cpu_busy_fraction, s.rss_bytes_per_worker,
                s.private_bytes_per_worker, s.valid ? "" : (" INVALID: " + s.error).c_str());
    std::fflush(stdout);
  });
  write_csv(a.out, samples);
  for (const auto& c : evaluate_trends(samples))
    std::printf("%s %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int run_serve(const Args& a) {
  Registry registry = Registry::builtin();
  if (!a.config.empty()) registry = load(a).registry;
  protocol::TcpListener listener(static_cast<std::uint16_t>(a.port));
  std::printf("serving on 127.0.0.1:%u\n", listener.port());
  std::fflush(stdout);
  ServeOptions opts;
  opts.factory = registry_factory(registry);
  serve_world(listener, opts);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent simulation: training loop, replay, benchmark and world server"};
  Args a;
  app.add_option("--config", a.config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--mode", a.mode, "train | eval | replay | bench | serve (default: mission.mode)")
      ->check(CLI::IsMember({"train", "eval", "replay", "bench", "serve"}));
  app.add_option("--seed", a.seed, "Override core.seed");
  app.add_option("--parallel", a.parallel, "Parallel environments (bench: worker count)");
  app.add_option("--time-dilation", a.dilation, "Dilation factor, or 'max' for unpaced");
  app.add_option("--frame-rate", a.frame_rate, "Baseline frames per simulated second");
  app.add_option("--decision-interval", a.decision_interval, "Simulated seconds per decision step");
  app.add_option("--transport", a.transport, "Worker transport: tcp | shmem");
  app.add_option("--task", a.task, "Bench task (default metal_clash_5lc_5mc)");
  app.add_option("--trace", a.trace, "Trace file to replay");
  app.add_option("--checkpoint", a.checkpoint, "Checkpoint to evaluate");
  app.add_option("--sweep", a.sweep, "Bench grid, e.g. workers=1,2,4 dilation=1,4,16")->expected(1, 2);
  app.add_option("--out", a.out, "Bench CSV output");
  app.add_option("--duration", a.duration, "Bench seconds per repetition")->check(CLI::PositiveNumber);
  app.add_option("--reps", a.reps, "Bench repetitions per sample")->check(CLI::PositiveNumber);
  app.add_option("--port", a.port, "Serve port (0 picks one)")->check(CLI::Range(0, 65535));
  CLI11_PARSE(app, argc, argv);

  try {
    std::string mode = a.mode;
    if (mode.empty()) {
      if (a.config.empty()) {
        std::cerr << "umap: need --mode or a --config with mission.mode\n";
        return 2;
      }
      mode = to_string(load_config_file(a.config).mission.mode);
    }
    if ((mode == "train" || mode == "eval") && a.config.empty()) {
      std::cerr << "umap: --mode " << mode << " needs --config\n";
      return 2;
    }
    if (mode == "train") return run_train(a);
    if (mode == "eval") return run_eval(a);
    if (mode == "replay") return run_replay(a);
    if (mode == "bench") return run_bench(a);
    return run_serve(a);
  } catch (const std::exception& e) {
    std::cerr << "umap: " << e.what() << '\n';
    return 1;
  }
}
