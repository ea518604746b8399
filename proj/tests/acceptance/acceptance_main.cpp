// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "perception_oracle.hpp"
#include "test_support.hpp"
#include "umap/bench.hpp"
#include "umap/protocol.hpp"

using namespace umap;
using namespace umap::testing;
using json = nlohmann::json;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- time ----

Verdict frames_per_decision_exact() {
  const auto t0 = Clock::now();
  const auto table = frames_per_decision(TimeConfig(0.5, 2560));
  const auto coarse_fpd = frames_per_decision(TimeConfig(0.5, 30));
  const double t = seconds_since(t0);
  return {table == 1280 && coarse_fpd == 15 && t < 1.0,
          fmt("0.5 s @ 2560 fps -> %lld, 0.5 s @ 30 fps -> %lld, %.3f s (limit 1 s)", static_cast<long long>(table),
              static_cast<long long>(coarse_fpd), t)};
}

// ---- determinism ----

const std::vector<std::string> kScenarioTasks{"metal_clash_5lc_5mc", "monster_crisis_easy", "flag_capture_1script",
                                              "navigation_game_5_vs_2"};

std::vector<std::uint64_t> scripted_digests(const std::string& task_name, std::uint64_t seed, double dilation) {
  const Registry& r = Registry::builtin();
  TaskSpec task = r.task(task_name);
  task.max_episode_steps = 20;
  Simulation sim(task, r.map(task.map_id), coarse(dilation));
  sim.set_pacing(!std::isinf(dilation));
  auto ps = policies_for(task, "scripted");
  const auto ep = run_episode(sim, raw(ps), seed, 0, false, seed, false);
  auto d = ep.step_digests;
  d.push_back(ep.digest);
  return d;
}

Verdict determinism() {
  const auto t0 = Clock::now();
  struct Job {
    std::string task;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& t : kScenarioTasks)
    for (std::uint64_t s = 0; s < 5; ++s) jobs.push_back({t, 1000 + s});

  // Paced runs mostly sleep, so every job of a dilation runs on its own thread.
  std::map<double, std::vector<std::vector<std::uint64_t>>> by_dilation;
  for (double dilation : {1.0, 8.0, TimeConfig::kUnpaced}) {
    auto& out = by_dilation[dilation];
    out.resize(jobs.size());
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs.size(); ++j)
      threads.emplace_back([&, j] { out[j] = scripted_digests(jobs[j].task, jobs[j].seed, dilation); });
    for (auto& th : threads) th.join();
  }
  std::size_t mismatches = 0, distinct_seeds = 0;
  const auto& ref = by_dilation[TimeConfig::kUnpaced];
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    mismatches += by_dilation[1.0][j] != ref[j];
    mismatches += by_dilation[8.0][j] != ref[j];
    mismatches += scripted_digests(jobs[j].task, jobs[j].seed, TimeConfig::kUnpaced) != ref[j];
  }
  for (std::size_t k = 0; k < kScenarioTasks.size(); ++k) {
    std::set<std::uint64_t> finals;
    for (std::size_t s = 0; s < 5; ++s) finals.insert(ref[k * 5 + s].back());
    distinct_seeds += finals.size();
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 60.0,
          fmt("4 scenarios x 5 seeds x dilation {1, 8, max} + rerun: %zu digest mismatches, %zu/20 distinct "
              "per-seed digests, %.1f s (limit 60 s)",
              mismatches, distinct_seeds, t)};
}

// ---- observations ----

Verdict observation_dimensions() {
  Simulation sim(Registry::builtin(), "metal_clash_het_10", coarse());
  sim.reset(0);
  std::map<AgentKind, std::set<std::size_t>> dims;
  for (std::size_t i = 0; i < sim.state().agents.size(); ++i)
    dims[sim.state().agents[i].kind].insert(sim.observation(i).size());
  const std::set<std::size_t> missile{340}, laser{220}, drone{483};
  const bool ok = dims[AgentKind::MissileCar] == missile && dims[AgentKind::LaserCar] == laser &&
                  dims[AgentKind::SupportDrone] == drone;
  auto show = [&](AgentKind k) { return dims[k].empty() ? std::size_t{0} : *dims[k].begin(); };
  return {ok, fmt("missile car %zu (want 340), laser car %zu (want 220), support drone %zu (want 483)",
                  show(AgentKind::MissileCar), show(AgentKind::LaserCar), show(AgentKind::SupportDrone))};
}

// ---- rewards ----

Verdict reward_ledger() {
  const Registry& r = Registry::builtin();
  // The last ten seeds use a 6-step limit so that timeouts (ties) are covered too.
  TaskSpec full = r.task("metal_clash_het_10"), cut = full;
  cut.max_episode_steps = 6;
  const MapSpec& map = r.map(full.map_id);
  const TaskSpec& task = full;
  double worst = 0.0;
  int wins = 0, ties = 0, kills = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto red = make_builtin_policy("scripted", 0, task);
    auto blue = make_builtin_policy(seed % 2 ? "random" : "scripted", 1, task);
    const std::vector<Policy*> ptrs{red.get(), blue.get()};
    const TaskSpec& t = seed < 40 ? full : cut;
    Simulation sim(t, map, coarse()), again(t, map, coarse());
    const auto ep = run_episode(sim, ptrs, seed, seed, true, seed);

    // Replay the same actions and count events; rewards come from the steps.
    again.reset(seed);
    std::map<std::int32_t, double> got;
    std::array<int, 2> lost{0, 0};
    std::int32_t winner = kOutcomePending;
    const TeamMap teams = team_map(again.state());
    for (const auto& rec : ep.records) {
      const StepOutcome out = again.step(rec.actions);
      for (const auto& [id, v] : out.rewards) got[id] += v;
      for (const auto& e : out.events) {
        if (e.kind == EventKind::AgentDestroyed) ++lost[teams.at(e.subject_id)];
        if (e.kind == EventKind::EpisodeEnded) winner = e.subject_id;
      }
    }
    if (winner == kOutcomePending) return {false, fmt("seed %llu ended without an EpisodeEnded event",
                                                      static_cast<unsigned long long>(seed))};
    ties += winner == kOutcomeTie;
    wins += winner >= 0;
    kills += lost[0] + lost[1];
    for (const auto& [id, team] : teams) {
      const double terminal = winner == team ? 1.0 : -1.0;
      const double expected = 0.1 * lost[1 - team] - 0.05 * lost[team] + terminal;
      worst = std::max(worst, std::abs(got[id] - expected));
    }
  }
  return {worst <= 1e-9, fmt("50 seeds (%d won, %d tied, %d kills): max |reward - (0.1k - 0.05m +/- 1)| = %.2e "
                             "(tolerance 1e-9)",
                             wins, ties, kills, worst)};
}

Verdict navigation_zero_sum() {
  Simulation sim(Registry::builtin(), "navigation_game_5_vs_2", coarse());
  double worst = 0.0;
  bool uneven = false;
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    sim.reset(seed);
    Rng rng(seed + 77);
    while (!sim.state().done) {
      const RewardMap rew = sim.step(random_actions(sim, rng)).rewards;
      // The team reward is what every member receives; teams differ in size.
      std::array<std::optional<double>, 2> team;
      for (const auto& a : sim.state().agents) {
        const double v = rew.at(a.agent_id);
        if (!team[a.team_id]) team[a.team_id] = v;
        if (*team[a.team_id] != v) uneven = true;
      }
      worst = std::max(worst, std::abs(*team[0] + *team[1]));
      ++steps;
    }
  }
  return {worst == 0.0 && !uneven,
          fmt("100 random episodes, %zu steps: max |team reward sum| = %.2e (must be exactly 0)%s", steps, worst,
              uneven ? ", members of a team rewarded unequally" : "")};
}

Verdict monster_crisis_purity() {
  Simulation sim(Registry::builtin(), "monster_crisis_duo", coarse());
  const double n_agents = static_cast<double>(sim.reset(0).agents.size());
  int zero = 0, full = 0, other = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    sim.reset(seed);
    Rng rng(seed * 31 + 5);
    double total = 0.0;
    while (!sim.state().done)
      for (const auto& [id, v] : sim.step(random_actions(sim, rng)).rewards) total += v;
    if (total == 0.0) {
      ++zero;
    } else if (total == n_agents) {
      ++full;
    } else {
      ++other;
    }
  }
  return {other == 0, fmt("200 random episodes: %d paid 0, %d paid n_agents = %g, %d other", zero, full, n_agents,
                          other)};
}

// ---- perception ----

Verdict perception_oracle() {
  Rng rng(20240);
  std::size_t mismatches = 0, pairs = 0, cones = 0;
  for (int w = 0; w < 100; ++w) {
    const std::size_t n = 2 + rng.below(63);  // 2..64
    const RandomScene s = random_scene(n, rng);
    for (const auto& sh : s.shapes) cones += std::holds_alternative<Cone>(sh);
    for (bool occlusion : {false, true}) {
      const PerceptionMatrix m = build_matrix(s.world, s.shapes, occlusion);
      const auto oracle = oracle_matrix(s.world, s.shapes, occlusion);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          mismatches += m(a, b) != oracle[a][b];
          ++pairs;
        }
    }
  }
  return {mismatches == 0, fmt("100 worlds, n <= 64, %zu cone observers, with and without occlusion: %zu/%zu "
                               "mismatches",
                               cones, mismatches, pairs)};
}

// ---- protocol ----

std::optional<protocol::FrameErrc> decode_errc(std::span<const std::uint8_t> bytes) {
  try {
    protocol::decode_frame(bytes);
  } catch (const protocol::FrameError& e) {
    return e.code();
  }
  return std::nullopt;
}

Verdict protocol_fuzz() {
  using namespace protocol;
  Rng rng(4242);
  auto payload = [&] {
    const std::size_t n = rng.uniform() < 0.005 ? (std::size_t{1} << 20) : rng.below(4096);
    std::string s(n, '\0');
    const bool compressible = rng.uniform() < 0.5;
    for (auto& c : s) c = static_cast<char>(compressible ? 'a' + rng.below(4) : rng.below(256));
    return s;
  };
  std::size_t roundtrip_fail = 0, lz4_frames = 0;
  std::map<FrameErrc, std::pair<int, int>> classes;  // designated error -> (tried, matched)
  auto expect = [&](FrameErrc want, std::span<const std::uint8_t> bytes) {
    auto& c = classes[want];
    ++c.first;
    c.second += decode_errc(bytes) == want;
  };
  for (int i = 0; i < 10000; ++i) {
    const Frame f{static_cast<MessageKind>(1 + rng.below(8)), static_cast<std::uint32_t>(rng.next_u64()), payload()};
    for (Codec codec : {Codec::Raw, Codec::Lz4}) {
      const auto bytes = encode_frame(f, codec);
      lz4_frames += bytes[5] == 1;
      try {
        roundtrip_fail += !(decode_frame(bytes) == f);
      } catch (const FrameError&) {
        ++roundtrip_fail;
      }
      if (i % 10) continue;  // corrupt every tenth frame, every class
      auto b = bytes;
      b[rng.below(4)] ^= static_cast<std::uint8_t>(1 + rng.below(255));
      expect(FrameErrc::BadMagic, b);
      b = bytes;
      b[4] = static_cast<std::uint8_t>(2 + rng.below(254));
      expect(FrameErrc::UnknownVersion, b);
      b = bytes;
      b[5] = static_cast<std::uint8_t>(2 + rng.below(254));
      expect(FrameErrc::UnknownCodec, b);
      b = bytes;
      const auto kind = static_cast<std::uint16_t>(9 + rng.below(65535 - 9));
      b[6] = static_cast<std::uint8_t>(kind >> 8), b[7] = static_cast<std::uint8_t>(kind);
      expect(FrameErrc::UnknownMessage, b);
      if (bytes.size() > 0) expect(FrameErrc::Truncated, std::span(bytes).first(rng.below(bytes.size())));
      b = bytes;
      for (std::size_t k = 1 + rng.below(64); k > 0; --k) b.push_back(static_cast<std::uint8_t>(rng.below(256)));
      expect(FrameErrc::LengthMismatch, b);
      b = bytes;
      const std::uint32_t huge = (std::uint32_t{1} << 31) + 1 + static_cast<std::uint32_t>(rng.below(1u << 30));
      for (int k = 0; k < 4; ++k) b[12 + k] = static_cast<std::uint8_t>(huge >> (24 - 8 * k));
      expect(FrameErrc::PayloadTooLarge, b);
      if (bytes[5] == 1) {
        // A compressed block whose declared original length is wrong.
        b = bytes;
        std::uint32_t orig = 0;
        for (int k = 0; k < 4; ++k) orig = (orig << 8) | b[16 + k];
        const std::uint32_t lie = orig + 1 + static_cast<std::uint32_t>(rng.below(1000));
        for (int k = 0; k < 4; ++k) b[16 + k] = static_cast<std::uint8_t>(lie >> (24 - 8 * k));
        expect(FrameErrc::CorruptPayload, b);
      }
    }
  }

  // Replayed sequence numbers on a live connection.
  {
    TcpListener listener(0);
    Connection tx(TcpStream::connect("127.0.0.1", listener.port()));
    Connection rx(listener.accept());
    auto& c = classes[FrameErrc::OutOfSequence];
    for (int k = 0; k < 20; ++k) {
      const auto seq = static_cast<std::uint32_t>(2 * k + 10);
      tx.send_frame(Frame{MessageKind::Hello, seq, "{}"});
      tx.send_frame(Frame{MessageKind::Hello, static_cast<std::uint32_t>(rng.below(seq + 1)), "{}"});
      rx.receive();
      ++c.first;
      try {
        rx.receive();
      } catch (const FrameError& e) {
        c.second += e.code() == FrameErrc::OutOfSequence;
      }
    }
  }

  bool ok = roundtrip_fail == 0 && lz4_frames > 1000 && classes.size() == 9;
  std::ostringstream d;
  d << "10000 frames x 2 codecs (" << lz4_frames << " compressed): " << roundtrip_fail << " round-trip failures;";
  for (const auto& [code, c] : classes) {
    d << ' ' << to_string(code) << ' ' << c.second << '/' << c.first;
    ok = ok && c.first > 0 && c.second == c.first;
  }
  return {ok, d.str()};
}

// ---- memory ----

Verdict pool_bounded() {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse());
  Rng rng(5);
  std::size_t after_two = 0, changes = 0, lo = SIZE_MAX, hi = 0;
  for (int ep = 0; ep < 1000; ++ep) {
    sim.reset(static_cast<std::uint64_t>(ep));
    for (int s = 0; s < 10 && !sim.state().done; ++s) sim.step(random_actions(sim, rng));
    const std::size_t hw = sim.pool().total_high_water();
    if (ep == 1) after_two = hw;
    if (ep > 1) {
      changes += hw != after_two;
      lo = std::min(lo, hw);
      hi = std::max(hi, hw);
    }
  }
  return {changes == 0, fmt("1000 reset/rollout cycles: high water %zu after episode 2, range [%zu, %zu] "
                            "afterwards, %zu changes",
                            after_two, lo, hi, changes)};
}

// ---- efficiency ----

Verdict efficiency_trends() {
  const auto t0 = Clock::now();
  BenchOptions opts;  // metal_clash_5lc_5mc, 0.5 s / 2560 fps, 10 s x 3 reps
  auto samples = sweep(opts, {2}, {1.0, 2.0, 4.0, 8.0});
  for (const auto& s : sweep(opts, {4}, {1.0})) samples.push_back(s);
  const double t = seconds_since(t0);
  write_csv(std::filesystem::path("acceptance_bench.csv"), samples);
  const auto trends = evaluate_trends(samples);
  bool ok = t < 300.0 && trends.size() == 3;
  std::ostringstream d;
  for (const auto& s : samples) {
    ok = ok && s.valid;
    d << "w" << s.workers << "/d" << s.dilation << " " << fmt("%.2f", s.tps) << " tps; ";
  }
  for (const auto& tr : trends) {
    ok = ok && tr.passed;
    d << tr.name << (tr.passed ? " ok" : " FAILED") << " [" << tr.detail << "] ";
  }
  d << fmt("%.0f s (limit 300 s)", t);
  return {ok, d.str()};
}

// ---- orchestration ----

json tri_flag_config(const std::string& schedule) {
  return {{"registry", json::parse(R"({"maps": [], "tasks": [{"name": "tri_flag", "scenario": "flag_capture",
              "map": "open_field", "max_episode_steps": 40, "teams": [
              {"name": "team1", "members": [["robot", 4]], "learnable": true},
              {"name": "team2", "members": [["robot", 4]], "learnable": true},
              {"name": "team3", "members": [["robot", 4]], "learnable": false}]}]})")},
          {"core",
           {{"seed", 17},
            {"parallel_envs", 4},
            {"test_interval", 8},
            {"test_episodes", 8},
            {"max_episodes", 32},
            {"update_schedule", schedule}}},
          {"mission",
           {{"task", "tri_flag"},
            {"teams", {"tabular_q", "t2.tabular_q", "scripted"}},
            {"time", {{"decision_interval", 0.5}, {"frame_rate", 30}, {"dilation", "max"}}}}},
          {"algorithm",
           {{"tabular_q", {{"learning_rate", 0.2}, {"epsilon", 0.3}}},
            {"t2.tabular_q", {{"learning_rate", 0.05}, {"epsilon", 0.5}}},
            {"scripted", json::object()}}}};
}

Verdict ordering_invariance() {
  std::map<std::string, RunResult> runs;
  for (const char* s : {"sequential", "reversed", "concurrent"})
    runs[s] = run_training(load_config(tri_flag_config(s)), RunOptions{true, false});
  const RunResult& ref = runs["sequential"];
  std::size_t buffer_diffs = 0, eval_diffs = 0, transitions = 0;
  for (const auto& b : ref.buffers) transitions += b.size();
  for (const auto& [name, run] : runs) {
    for (std::size_t t = 0; t < ref.buffers.size(); ++t) buffer_diffs += run.buffers[t].bytes() != ref.buffers[t].bytes();
    eval_diffs += run.evals.size() != ref.evals.size();
    for (std::size_t e = 0; e < std::min(run.evals.size(), ref.evals.size()); ++e)
      eval_diffs += run.evals[e].win_rate != ref.evals[e].win_rate;
  }
  return {buffer_diffs == 0 && eval_diffs == 0 && transitions > 0 && ref.evals.size() == 4,
          fmt("3 teams x 3 schedules, %zu transitions, %zu eval points: %zu buffer differences, %zu win-rate "
              "differences",
              transitions, ref.evals.size(), buffer_diffs, eval_diffs)};
}

json duo_config(const std::string& policy, std::uint64_t seed, int episodes) {
  return {{"core",
           {{"seed", seed},
            {"parallel_envs", 8},
            {"test_interval", std::max(episodes, 1)},
            {"test_episodes", 32},
            {"max_episodes", episodes}}},
          {"mission",
           {{"task", "monster_crisis_duo"},
            {"teams", {policy}},
            {"time", {{"decision_interval", 0.5}, {"frame_rate", 30}, {"dilation", "max"}}}}},
          {"algorithm", {{policy, policy == "tabular_q" ? json{{"learning_rate", 0.1}, {"epsilon", 1.0},
                                                                  {"gamma", 0.95}}
                                                            : json::object()}}}};
}

Verdict learning_smoke() {
  const auto t0 = Clock::now();
  std::vector<double> learned, baseline;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto run = run_training(load_config(duo_config("tabular_q", seed, 3000)), RunOptions{false, false});
    learned.push_back(run.evals.empty() ? 0.0 : run.evals.back().mean_return[0]);
    baseline.push_back(run_evaluation(load_config(duo_config("random", seed, 0))).mean_return[0]);
  }
  const double t = seconds_since(t0);
  const double p = permutation_p_value(learned, baseline);
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  return {p < 0.05 && mean(learned) > mean(baseline) && t < 600.0,
          fmt("tabular Q mean eval return %.3f vs random %.3f over 5 seeds each, one-sided permutation p = %.4f "
              "(need < 0.05), %.0f s (limit 600 s)",
              mean(learned), mean(baseline), p, t)};
}

}  // namespace

// An optional argument runs only the criteria whose name contains it.
int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"frames_per_decision_exact", frames_per_decision_exact},
      {"determinism_across_dilation", determinism},
      {"observation_dimensions", observation_dimensions},
      {"metal_clash_reward_ledger", reward_ledger},
      {"navigation_zero_sum", navigation_zero_sum},
      {"monster_crisis_sparse_purity", monster_crisis_purity},
      {"perception_matches_oracle", perception_oracle},
      {"protocol_fuzz", protocol_fuzz},
      {"object_pool_bounded", pool_bounded},
      {"efficiency_trends", efficiency_trends},
      {"update_ordering_invariance", ordering_invariance},
      {"learning_beats_random", learning_smoke},
  };
  int failures = 0;
  int run = 0;
  for (const auto& [name, check] : criteria) {
    if (std::string(name).find(filter) == std::string::npos) continue;
    ++run;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.passed;
    std::printf("%s %s: %s\n", v.passed ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria, %d failed\n", run, failures);
  return failures == 0 ? 0 : 1;
}
