#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "umap/server.hpp"
#include "umap/simulation.hpp"

namespace umap {

// ---- experiment configuration ----
//
// {
//   "core":      {"storage_path", "seed", "parallel_envs", "test_interval",
//                 "test_episodes", "max_episodes", "update_schedule", "worker_mode"},
//   "mission":   {"env", "task", "map", "mode", "teams": [<algorithm key>...], "time": {...}},
//   "algorithm": {"<key>": {params}, "t2.<policy>": {params}, ...}
// }
// An algorithm key is "<policy>" or "<prefix>.<policy>"; prefixes let several
// teams run the same policy with separate parameter bundles.

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class UpdateSchedule { Sequential, Reversed, Concurrent };
enum class WorkerMode { Inline, Process };
enum class RunMode { Train, Eval, Replay, Bench, Serve };

UpdateSchedule update_schedule_from_string(const std::string& s);
std::string to_string(UpdateSchedule s);
RunMode run_mode_from_string(const std::string& s);
std::string to_string(RunMode m);

struct CoreConfig {
  std::filesystem::path storage_path = "runs/default";
  std::uint64_t seed = 0;
  int parallel_envs = 1;
  int test_interval = 64;
  int test_episodes = 32;
  int max_episodes = 128;
  UpdateSchedule update_schedule = UpdateSchedule::Sequential;
  WorkerMode worker_mode = WorkerMode::Inline;
  Transport transport = Transport::Tcp;
};

struct MissionConfig {
  std::string env = "umap";
  std::string task;
  std::string map;                      // defaults to the task's map
  std::vector<std::string> team_keys;   // algorithm key per team, by team id
  RunMode mode = RunMode::Train;
  TimeConfig time = TimeConfig::standard();
  std::optional<std::filesystem::path> trace;  // replay input
};

struct PolicyBinding {
  std::int32_t team = 0;
  std::string key;     // as written in the algorithm section
  std::string prefix;  // "" when unprefixed
  std::string policy;  // built-in policy id
  nlohmann::json params = nlohmann::json::object();
};

struct ExperimentConfig {
  CoreConfig core;
  MissionConfig mission;
  std::vector<PolicyBinding> bindings;  // one per team, by team id
  Registry registry;                    // built-ins plus any "registry" section
  nlohmann::json registry_doc;          // that section verbatim (null when absent)
};

ExperimentConfig load_config(const nlohmann::json& doc, const Registry& base = Registry::builtin());
ExperimentConfig load_config_file(const std::filesystem::path& path,
                                  const Registry& base = Registry::builtin());

// ---- policies ----

// Everything one team may look at when choosing its joint action.
struct PolicyView {
  const TaskSpec& task;
  const MapSpec& map;
  const WorldState& state;
  const PerceptionMatrix& perception;
  // agent id -> observation vector, living members of this team only
  const std::map<std::int32_t, std::vector<double>>& observations;
  // agent id -> number of actions
  const std::map<std::int32_t, int>& action_counts;
  std::int32_t team = 0;
  std::uint64_t episode = 0;
  std::int32_t step = 0;
};

struct Transition {
  std::uint64_t episode = 0;
  std::int32_t step = 0;
  std::int32_t agent_id = 0;
  std::vector<double> obs;
  std::int32_t action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;
  bool operator==(const Transition&) const = default;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  // Pure with respect to policy state: acting never changes the policy.
  virtual JointAction act(const PolicyView& view, bool explore, Rng& rng) const = 0;
  virtual void update(std::span<const Transition>) {}
  virtual nlohmann::json save() const { return nlohmann::json::object(); }
  virtual void load(const nlohmann::json&) {}
};

// Known ids: scripted, random, tabular_q, recorded, external.
bool is_known_policy(const std::string& id);
std::unique_ptr<Policy> make_policy(const PolicyBinding& binding, const TaskSpec& task);

// Per-(seed, team, episode, step) stream, so actions never depend on how
// episodes are scheduled or on other teams.
Rng policy_rng(std::uint64_t seed, std::int32_t team, std::uint64_t episode, std::int32_t step);

// Living member indices of a team.
std::vector<std::size_t> living_members(const WorldState& world, std::int32_t team);

// Coarse state key for the tabular learner.
std::uint64_t discretize(const std::string& scenario, std::span<const double> obs);

struct TabularQParams {
  double learning_rate = 0.1;
  double gamma = 0.99;
  double epsilon = 0.1;
};

class TabularQ final : public Policy {
 public:
  TabularQ(std::string scenario, int num_actions, TabularQParams params);
  std::string_view name() const override { return "tabular_q"; }
  JointAction act(const PolicyView& view, bool explore, Rng& rng) const override;
  void update(std::span<const Transition> batch) override;
  nlohmann::json save() const override;
  void load(const nlohmann::json& j) override;

  // One-step TD update on an explicit state key pair.
  void td_update(std::uint64_t s, int a, double r, std::uint64_t s_next, bool done);
  double q(std::uint64_t s, int a) const;
  int greedy(std::uint64_t s) const;
  const TabularQParams& params() const { return params_; }
  std::size_t states() const { return table_.size(); }

 private:
  std::vector<double>& row(std::uint64_t s);
  std::string scenario_;
  int num_actions_;
  TabularQParams params_;
  std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

// ---- data routing ----

class TeamBuffer {
 public:
  explicit TeamBuffer(std::int32_t team = 0) : team_(team) {}
  std::int32_t team() const { return team_; }
  void append(Transition t) { items_.push_back(std::move(t)); }
  std::span<const Transition> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  void clear() { items_.clear(); }
  // Canonical byte image, for identity checks.
  std::string bytes() const;

 private:
  std::int32_t team_;
  std::vector<Transition> items_;
};

using TeamMap = std::map<std::int32_t, std::int32_t>;  // agent id -> team
TeamMap team_map(const WorldState& world);

struct StepRecord {
  std::uint64_t episode = 0;
  std::int32_t step = 0;
  std::map<std::int32_t, std::vector<double>> obs;       // agents that acted
  JointAction actions;
  RewardMap rewards;
  std::map<std::int32_t, std::vector<double>> next_obs;
  std::map<std::int32_t, bool> agent_done;               // episode over or agent died
};

// Appends one transition per acting agent to its team's buffer (buffers are
// indexed by team id). Throws std::out_of_range for agents with no team.
void route_transitions(const StepRecord& record, const TeamMap& teams, std::vector<TeamBuffer>& buffers);

// ---- episodes and the training loop ----

struct EpisodeResult {
  std::uint64_t episode = 0;
  std::uint64_t seed = 0;
  std::int32_t winner = kOutcomePending;
  std::int32_t steps = 0;
  std::vector<double> team_return;  // summed over members
  std::uint64_t reset_digest = 0;
  std::uint64_t digest = 0;
  std::vector<std::uint64_t> step_digests;
  TeamMap teams;
  std::vector<StepRecord> records;
};

// Plays one episode in-process with the given per-team policies.
EpisodeResult run_episode(Simulation& sim, std::span<Policy* const> policies, std::uint64_t seed,
                          std::uint64_t episode, bool explore, std::uint64_t policy_seed,
                          bool keep_records = true);

struct EvalPoint {
  std::uint64_t episode = 0;
  std::vector<double> win_rate;     // per team
  std::vector<double> mean_return;  // per team
};

struct RunResult {
  std::uint64_t episodes = 0;
  std::vector<EvalPoint> evals;
  std::vector<std::uint64_t> digests;      // training episodes, in order
  std::vector<TeamBuffer> buffers;         // every routed transition, by team
  std::filesystem::path run_dir;
};

struct RunOptions {
  bool keep_buffers = false;
  bool write_files = true;
};

RunResult run_training(const ExperimentConfig& config, const RunOptions& options = {});
// Greedy evaluation only; policies are loaded from `checkpoint` when given.
EvalPoint run_evaluation(const ExperimentConfig& config, const std::optional<nlohmann::json>& checkpoint = {});

// Seeds used for training episode k and evaluation episode k.
std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode);
std::uint64_t eval_seed(std::uint64_t base, std::uint64_t episode);

// Exact one-sided permutation test: P(mean(a) - mean(b) >= observed) under
// exchangeability of the pooled samples.
double permutation_p_value(std::span<const double> a, std::span<const double> b);

}  // namespace umap
