#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "umap/orchestrator.hpp"
#include "umap/serialization.hpp"
#include "umap/trace.hpp"

namespace umap {

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode) {
  return mix64(base ^ mix64(episode + 0x7261696e00000000ULL));
}

std::uint64_t eval_seed(std::uint64_t base, std::uint64_t episode) {
  return mix64(base ^ mix64(episode + 0x6576616c00000000ULL));
}

double permutation_p_value(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("permutation test needs two nonempty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size();
  const std::size_t k = a.size();
  if (n > 30) throw std::invalid_argument("exact permutation test is limited to 30 pooled samples");
  double total = 0.0;
  for (double x : pooled) total += x;
  auto diff = [&](double sum_a) {
    return sum_a / static_cast<double>(k) - (total - sum_a) / static_cast<double>(n - k);
  };
  double sum_a = 0.0;
  for (double x : a) sum_a += x;
  const double observed = diff(sum_a);
  const double eps = 1e-12 * std::max(1.0, std::abs(observed));

  // Walk every k-subset of the pooled indices.
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  std::uint64_t hits = 0, count = 0;
  while (true) {
    double s = 0.0;
    for (std::size_t i : idx) s += pooled[i];
    ++count;
    if (diff(s) >= observed - eps) ++hits;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

namespace {

// Action counts of every agent, from the scenario's kind profiles.
std::map<std::int32_t, int> action_counts(const Scenario& scenario, const TaskSpec& task, const WorldState& w) {
  std::map<std::int32_t, int> counts;
  for (const auto& a : w.agents) counts[a.agent_id] = scenario.profile(a.kind, task).num_actions;
  return counts;
}

// Everything a decision needs, as seen before one step.
struct Snapshot {
  WorldState state;
  PerceptionMatrix perception;
  std::map<std::int32_t, std::map<std::int32_t, std::vector<double>>> obs;  // team -> id -> obs
};

JointAction decide(const TaskSpec& task, const MapSpec& map, const Snapshot& snap,
                   const std::map<std::int32_t, int>& counts, std::span<Policy* const> policies,
                   std::uint64_t episode, bool explore, std::uint64_t policy_seed) {
  JointAction joint;
  for (std::size_t t = 0; t < policies.size(); ++t) {
    const auto team = static_cast<std::int32_t>(t);
    static const std::map<std::int32_t, std::vector<double>> none;
    auto it = snap.obs.find(team);
    const PolicyView view{task,   map,     snap.state, snap.perception, it == snap.obs.end() ? none : it->second,
                          counts, team,    episode,    snap.state.episode_step};
    Rng rng = policy_rng(policy_seed, team, episode, snap.state.episode_step);
    for (const auto& [id, a] : policies[t]->act(view, explore, rng)) joint[id] = a;
  }
  return joint;
}

Snapshot snapshot_of(const Simulation& sim) {
  Snapshot s{sim.state(), sim.perception(), {}};
  for (std::size_t i = 0; i < s.state.agents.size(); ++i) {
    const auto& a = s.state.agents[i];
    if (a.alive) s.obs[a.team_id][a.agent_id] = sim.observation(i);
  }
  return s;
}

Snapshot snapshot_of(const json& body) {
  Snapshot s;
  s.state = body.at("state").get<WorldState>();
  const auto& rows = body.at("perception");
  s.perception = PerceptionMatrix(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string row = rows[i].get<std::string>();
    for (std::size_t j = 0; j < row.size(); ++j) s.perception.set(i, j, row[j] == '1');
  }
  std::map<std::int32_t, bool> alive;
  for (const auto& a : s.state.agents) alive[a.agent_id] = a.alive;
  for (const auto& [team, members] : body.at("observations").items()) {
    for (const auto& [id, o] : members.items()) {
      const int agent = std::stoi(id);
      if (alive[agent]) s.obs[std::stoi(team)][agent] = o.get<std::vector<double>>();
    }
  }
  return s;
}

std::map<std::int32_t, std::vector<double>> acting_obs(const Snapshot& s, const JointAction& actions) {
  std::map<std::int32_t, std::vector<double>> out;
  for (const auto& [team, members] : s.obs) {
    for (const auto& [id, o] : members) {
      if (actions.count(id)) out[id] = o;
    }
  }
  return out;
}

std::map<std::int32_t, std::vector<double>> all_obs(const Simulation* sim, const json* body) {
  std::map<std::int32_t, std::vector<double>> out;
  if (sim) {
    for (std::size_t i = 0; i < sim->state().agents.size(); ++i)
      out[sim->state().agents[i].agent_id] = sim->observation(i);
  } else {
    for (const auto& [team, members] : body->at("observations").items())
      for (const auto& [id, o] : members.items()) out[std::stoi(id)] = o.get<std::vector<double>>();
  }
  return out;
}

// Bookkeeping shared by in-process and worker-driven episodes.
void account(EpisodeResult& r, const WorldState& after, const JointAction& actions, const RewardMap& rewards,
             const Snapshot& before, std::map<std::int32_t, std::vector<double>> next_obs, bool keep_records) {
  if (r.teams.empty()) r.teams = team_map(after);
  const TeamMap& teams = r.teams;
  for (const auto& [id, reward] : rewards) {
    const auto t = static_cast<std::size_t>(teams.at(id));
    if (r.team_return.size() <= t) r.team_return.resize(t + 1, 0.0);
    r.team_return[t] += reward;
  }
  if (!keep_records) return;
  StepRecord rec;
  rec.episode = r.episode;
  rec.step = before.state.episode_step;
  rec.obs = acting_obs(before, actions);
  rec.actions = actions;
  rec.rewards = rewards;
  for (const auto& [id, a] : actions) {
    rec.next_obs[id] = std::move(next_obs.at(id));
    bool alive = false;
    for (const auto& ag : after.agents)
      if (ag.agent_id == id) alive = ag.alive;
    rec.agent_done[id] = after.done || !alive;
  }
  r.records.push_back(std::move(rec));
}

std::uint64_t parse_digest(const json& body) {
  return std::stoull(body.at("digest").get<std::string>(), nullptr, 16);
}

}  // namespace

EpisodeResult run_episode(Simulation& sim, std::span<Policy* const> policies, std::uint64_t seed,
                          std::uint64_t episode, bool explore, std::uint64_t policy_seed, bool keep_records) {
  if (policies.size() != sim.task().teams.size())
    throw std::invalid_argument("run_episode needs one policy per team");
  EpisodeResult r;
  r.episode = episode;
  r.seed = seed;
  r.team_return.assign(policies.size(), 0.0);
  sim.reset(seed);
  r.reset_digest = sim.digest();
  const auto counts = action_counts(sim.scenario(), sim.task(), sim.state());
  while (!sim.state().done) {
    Snapshot before = snapshot_of(sim);
    const JointAction actions =
        decide(sim.task(), sim.map(), before, counts, policies, episode, explore, policy_seed);
    const StepOutcome out = sim.step(actions);
    r.step_digests.push_back(sim.digest());
    account(r, sim.state(), actions, out.rewards, before, keep_records ? all_obs(&sim, nullptr)
                                                                       : std::map<std::int32_t, std::vector<double>>{},
            keep_records);
  }
  r.steps = sim.state().episode_step;
  r.winner = sim.state().winner;
  r.digest = sim.digest();
  return r;
}

namespace {

class WorkerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Plays batches of episodes either in this process or on forked workers.
class Collector {
 public:
  explicit Collector(const ExperimentConfig& cfg)
      : cfg_(cfg),
        task_(cfg.registry.task(cfg.mission.task)),
        map_(cfg.registry.map(cfg.mission.map)),
        scenario_(make_scenario(task_.scenario)) {
    if (cfg.core.worker_mode == WorkerMode::Process) {
      PoolOptions opts;
      opts.workers = static_cast<std::size_t>(cfg.core.parallel_envs);
      opts.transport = cfg.core.transport;
      opts.serve.factory = registry_factory(Registry::builtin());
      pool_ = std::make_unique<WorkerPool>(opts);
      json conf = {{"task", task_.name},
                   {"map", map_.id},
                   {"time", time_config_to_json(cfg.mission.time)},
                   {"pacing", false}};
      if (!cfg.registry_doc.is_null()) conf["registry"] = cfg.registry_doc;
      check(pool_configure(*pool_, std::vector<json>(pool_->size(), conf)));
    } else {
      sim_ = std::make_unique<Simulation>(task_, map_, cfg.mission.time);
      sim_->set_pacing(false);
    }
  }

  ~Collector() {
    if (pool_) pool_->shutdown();
  }

  const TaskSpec& task() const { return task_; }
  const Simulation* sim() const { return sim_.get(); }

  // Episodes (index, seed) played in order of index; results come back in
  // the same order.
  std::vector<EpisodeResult> collect(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& jobs,
                                     std::span<Policy* const> policies, bool explore, std::uint64_t policy_seed,
                                     bool keep_records) {
    std::vector<EpisodeResult> out;
    if (!pool_) {
      for (const auto& [episode, seed] : jobs)
        out.push_back(run_episode(*sim_, policies, seed, episode, explore, policy_seed, keep_records));
      return out;
    }
    for (std::size_t start = 0; start < jobs.size(); start += pool_->size()) {
      const std::size_t n = std::min(pool_->size(), jobs.size() - start);
      auto batch = std::span(jobs).subspan(start, n);
      auto results = remote_batch(batch, policies, explore, policy_seed, keep_records);
      for (auto& r : results) out.push_back(std::move(r));
    }
    return out;
  }

 private:
  static void check(const std::vector<WorkerReply>& replies) {
    for (std::size_t i = 0; i < replies.size(); ++i) check(replies[i], i);
  }
  static void check(const WorkerReply& r, std::size_t i) {
    if (!r.ok) throw WorkerFailure("worker " + std::to_string(i) + " failed: " + r.error);
  }

  std::vector<EpisodeResult> remote_batch(std::span<const std::pair<std::uint64_t, std::uint64_t>> batch,
                                          std::span<Policy* const> policies, bool explore,
                                          std::uint64_t policy_seed, bool keep_records) {
    const std::size_t n = batch.size();
    std::vector<EpisodeResult> results(n);
    std::vector<json> bodies(n);
    std::vector<std::map<std::int32_t, int>> counts(n);
    for (std::size_t i = 0; i < n; ++i) {
      const WorkerReply reply = pool_->request(i, protocol::MessageKind::Reset, json{{"seed", batch[i].second}}.dump());
      check(reply, i);
      bodies[i] = reply.body();
      results[i].episode = batch[i].first;
      results[i].seed = batch[i].second;
      results[i].team_return.assign(task_.teams.size(), 0.0);
      results[i].reset_digest = parse_digest(bodies[i]);
    }
    std::vector<bool> active(n, true);
    std::vector<Snapshot> before(n);
    std::vector<JointAction> actions(n);
    std::vector<WorkerReply> replies(n);
    while (std::any_of(active.begin(), active.end(), [](bool b) { return b; })) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        before[i] = snapshot_of(bodies[i]);
        if (counts[i].empty()) counts[i] = action_counts(*scenario_, task_, before[i].state);
        actions[i] = decide(task_, map_, before[i], counts[i], policies, batch[i].first, explore, policy_seed);
      }
      // Step every live world concurrently.
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        threads.emplace_back([&, i] {
          replies[i] = pool_->request(i, protocol::MessageKind::StepRequest, actions_body(actions[i]).dump());
        });
      }
      for (auto& t : threads) t.join();
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        check(replies[i], i);
        bodies[i] = replies[i].body();
        const WorldState after = bodies[i].at("state").get<WorldState>();
        results[i].step_digests.push_back(parse_digest(bodies[i]));
        account(results[i], after, actions[i], rewards_from_json(bodies[i].at("rewards")), before[i],
                keep_records ? all_obs(nullptr, &bodies[i])
                             : std::map<std::int32_t, std::vector<double>>{},
                keep_records);
        if (after.done) {
          active[i] = false;
          results[i].steps = after.episode_step;
          results[i].winner = after.winner;
          results[i].digest = parse_digest(bodies[i]);
        }
      }
    }
    return results;
  }

  const ExperimentConfig& cfg_;
  const TaskSpec& task_;
  const MapSpec& map_;
  std::shared_ptr<const Scenario> scenario_;
  std::unique_ptr<Simulation> sim_;
  std::unique_ptr<WorkerPool> pool_;
};

std::vector<std::unique_ptr<Policy>> make_policies(const ExperimentConfig& cfg) {
  const TaskSpec& task = cfg.registry.task(cfg.mission.task);
  std::vector<std::unique_ptr<Policy>> out;
  for (const auto& b : cfg.bindings) out.push_back(make_policy(b, task));
  return out;
}

std::vector<Policy*> raw(const std::vector<std::unique_ptr<Policy>>& policies) {
  std::vector<Policy*> out;
  for (const auto& p : policies) out.push_back(p.get());
  return out;
}

// Evaluation episodes use their own seeds and policy stream, and never
// explore, so they leave every policy untouched.
EvalPoint evaluate(Collector& collector, std::span<Policy* const> policies, const ExperimentConfig& cfg,
                   std::uint64_t at_episode, std::vector<EpisodeResult>* keep = nullptr) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> jobs;
  for (int k = 0; k < cfg.core.test_episodes; ++k) {
    const auto e = static_cast<std::uint64_t>(k);
    jobs.emplace_back(e, eval_seed(cfg.core.seed, e));
  }
  auto results = collector.collect(jobs, policies, false, mix64(cfg.core.seed ^ 0x65766131ULL), keep != nullptr);
  const std::size_t teams = policies.size();
  EvalPoint p;
  p.episode = at_episode;
  p.win_rate.assign(teams, 0.0);
  p.mean_return.assign(teams, 0.0);
  std::vector<std::int32_t> winners;
  for (const auto& r : results) {
    winners.push_back(r.winner);
    for (std::size_t t = 0; t < teams; ++t) p.mean_return[t] += r.team_return[t];
  }
  for (std::size_t t = 0; t < teams; ++t) {
    p.win_rate[t] = results.empty() ? 0.0 : win_rate(winners, static_cast<std::int32_t>(t));
    if (!results.empty()) p.mean_return[t] /= static_cast<double>(results.size());
  }
  if (keep) *keep = std::move(results);
  return p;
}

void update_policies(std::vector<std::unique_ptr<Policy>>& policies, const std::vector<TeamBuffer>& batch,
                     UpdateSchedule schedule) {
  const std::size_t n = policies.size();
  switch (schedule) {
    case UpdateSchedule::Sequential:
      for (std::size_t t = 0; t < n; ++t) policies[t]->update(batch[t].items());
      break;
    case UpdateSchedule::Reversed:
      for (std::size_t t = n; t-- > 0;) policies[t]->update(batch[t].items());
      break;
    case UpdateSchedule::Concurrent: {
      std::vector<std::thread> threads;
      for (std::size_t t = 0; t < n; ++t) threads.emplace_back([&, t] { policies[t]->update(batch[t].items()); });
      for (auto& th : threads) th.join();
      break;
    }
  }
}

std::filesystem::path fresh_run_dir(const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  for (int i = 0;; ++i) {
    std::ostringstream name;
    name << "run_" << std::setw(4) << std::setfill('0') << i;
    const auto dir = root / name.str();
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

void write_trace(const std::filesystem::path& path, const ExperimentConfig& cfg, const EpisodeResult& r) {
  TraceHeader h;
  h.task = cfg.mission.task;
  h.seed = r.seed;
  h.decision_interval = cfg.mission.time.decision_interval();
  h.frame_rate = cfg.mission.time.baseline_frame_rate();
  h.dilation = cfg.mission.time.dilation_factor();
  h.layout_version = static_cast<std::uint16_t>(kFeatureLayoutVersion);
  TraceWriter w(path, h, r.reset_digest);
  for (std::size_t s = 0; s < r.records.size(); ++s)
    w.step(TraceStep{static_cast<std::uint32_t>(s + 1), r.records[s].actions, r.step_digests[s]});
  w.end(TraceEnd{static_cast<std::uint32_t>(r.steps), r.digest, r.winner});
}

json checkpoint_doc(const ExperimentConfig& cfg, const std::vector<std::unique_ptr<Policy>>& policies,
                    std::uint64_t episode) {
  json teams = json::array();
  for (std::size_t t = 0; t < policies.size(); ++t) {
    teams.push_back({{"team", t}, {"key", cfg.bindings[t].key}, {"policy", std::string(policies[t]->name())},
                     {"state", policies[t]->save()}});
  }
  return {{"task", cfg.mission.task}, {"episode", episode}, {"teams", std::move(teams)}};
}

void load_checkpoint(std::vector<std::unique_ptr<Policy>>& policies, const json& doc) {
  for (const auto& t : doc.at("teams")) {
    const auto team = t.at("team").get<std::size_t>();
    if (team >= policies.size()) throw ConfigError("checkpoint names team " + std::to_string(team));
    policies[team]->load(t.at("state"));
  }
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg, const RunOptions& options) {
  Collector collector(cfg);
  auto policies = make_policies(cfg);
  const auto ptrs = raw(policies);
  const std::size_t teams = policies.size();

  RunResult result;
  for (std::size_t t = 0; t < teams; ++t) result.buffers.emplace_back(static_cast<std::int32_t>(t));

  std::ofstream csv;
  if (options.write_files) {
    result.run_dir = fresh_run_dir(cfg.core.storage_path);
    std::filesystem::create_directories(result.run_dir / "traces");
    csv.open(result.run_dir / "win_rate.csv");
    csv << "episode,team,team_name,policy,win_rate,mean_return\n" << std::flush;
  }
  auto log_eval = [&](const EvalPoint& p, const std::vector<EpisodeResult>& kept) {
    result.evals.push_back(p);
    if (!options.write_files) return;
    for (std::size_t t = 0; t < teams; ++t) {
      csv << p.episode << ',' << t << ',' << collector.task().teams[t].name << ',' << cfg.bindings[t].key << ','
          << std::setprecision(17) << p.win_rate[t] << ',' << p.mean_return[t] << '\n';
    }
    csv.flush();
    std::ofstream(result.run_dir / ("checkpoint_" + std::to_string(p.episode) + ".json"))
        << checkpoint_doc(cfg, policies, p.episode).dump(1) << '\n';
    if (!kept.empty()) {
      write_trace(result.run_dir / "traces" / ("eval_e" + std::to_string(p.episode) + ".umtr"), cfg, kept.front());
    }
  };

  const auto total = static_cast<std::uint64_t>(cfg.core.max_episodes);
  const auto interval = static_cast<std::uint64_t>(cfg.core.test_interval);
  const auto batch_size = static_cast<std::uint64_t>(cfg.core.parallel_envs);
  std::uint64_t done = 0;
  while (done < total) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> jobs;
    for (std::uint64_t e = done; e < std::min(total, done + batch_size); ++e)
      jobs.emplace_back(e, episode_seed(cfg.core.seed, e));
    const auto episodes = collector.collect(jobs, ptrs, true, cfg.core.seed, true);

    // Route in episode order: buffer contents depend only on trajectories.
    std::vector<TeamBuffer> batch;
    for (std::size_t t = 0; t < teams; ++t) batch.emplace_back(static_cast<std::int32_t>(t));
    for (const auto& ep : episodes) {
      for (const auto& rec : ep.records) route_transitions(rec, ep.teams, batch);
    }
    update_policies(policies, batch, cfg.core.update_schedule);
    for (const auto& ep : episodes) result.digests.push_back(ep.digest);
    if (options.keep_buffers) {
      for (std::size_t t = 0; t < teams; ++t)
        for (const auto& tr : batch[t].items()) result.buffers[t].append(tr);
    }
    const std::uint64_t before = done;
    done += jobs.size();
    if (cfg.core.test_episodes > 0 && done / interval > before / interval) {
      std::vector<EpisodeResult> kept;
      const EvalPoint p = evaluate(collector, ptrs, cfg, done / interval * interval,
                                   options.write_files ? &kept : nullptr);
      log_eval(p, kept);
    }
  }
  result.episodes = done;
  if (options.write_files) {
    std::ofstream(result.run_dir / "checkpoint_final.json") << checkpoint_doc(cfg, policies, done).dump(1) << '\n';
  }
  return result;
}

EvalPoint run_evaluation(const ExperimentConfig& cfg, const std::optional<json>& checkpoint) {
  Collector collector(cfg);
  auto policies = make_policies(cfg);
  if (checkpoint) load_checkpoint(policies, *checkpoint);
  const auto ptrs = raw(policies);
  return evaluate(collector, ptrs, cfg, 0);
}

}  // namespace umap
