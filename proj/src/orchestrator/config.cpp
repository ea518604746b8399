#include <fstream>
#include <set>

#include "umap/orchestrator.hpp"
#include "umap/serialization.hpp"

namespace umap {

UpdateSchedule update_schedule_from_string(const std::string& s) {
  if (s == "sequential") return UpdateSchedule::Sequential;
  if (s == "reversed") return UpdateSchedule::Reversed;
  if (s == "concurrent") return UpdateSchedule::Concurrent;
  throw ConfigError("unknown update_schedule '" + s + "'");
}

std::string to_string(UpdateSchedule s) {
  switch (s) {
    case UpdateSchedule::Sequential: return "sequential";
    case UpdateSchedule::Reversed: return "reversed";
    case UpdateSchedule::Concurrent: return "concurrent";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "train") return RunMode::Train;
  if (s == "eval") return RunMode::Eval;
  if (s == "replay") return RunMode::Replay;
  if (s == "bench") return RunMode::Bench;
  if (s == "serve") return RunMode::Serve;
  throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::Train: return "train";
    case RunMode::Eval: return "eval";
    case RunMode::Replay: return "replay";
    case RunMode::Bench: return "bench";
    case RunMode::Serve: return "serve";
  }
  return "?";
}

namespace {

int positive(const json& section, const char* key, int fallback, int minimum) {
  const int v = section.value(key, fallback);
  if (v < minimum)
    throw ConfigError(std::string("core.") + key + " must be at least " + std::to_string(minimum));
  return v;
}

CoreConfig parse_core(const json& j) {
  CoreConfig c;
  c.storage_path = j.value("storage_path", c.storage_path.string());
  c.seed = j.value("seed", c.seed);
  c.parallel_envs = positive(j, "parallel_envs", c.parallel_envs, 1);
  c.test_interval = positive(j, "test_interval", c.test_interval, 1);
  c.test_episodes = positive(j, "test_episodes", c.test_episodes, 0);
  c.max_episodes = positive(j, "max_episodes", c.max_episodes, 0);
  c.update_schedule = update_schedule_from_string(j.value("update_schedule", std::string("sequential")));
  const std::string mode = j.value("worker_mode", std::string("inline"));
  if (mode == "inline") {
    c.worker_mode = WorkerMode::Inline;
  } else if (mode == "process") {
    c.worker_mode = WorkerMode::Process;
  } else {
    throw ConfigError("unknown worker_mode '" + mode + "'");
  }
  try {
    c.transport = transport_from_string(j.value("transport", std::string("tcp")));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::pair<std::string, std::string> split_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) return {"", key};
  return {key.substr(0, dot), key.substr(dot + 1)};
}

}  // namespace

ExperimentConfig load_config(const json& doc, const Registry& base) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const char* section : {"core", "mission", "algorithm"}) {
    if (!doc.contains(section)) throw ConfigError(std::string("missing '") + section + "' section");
  }
  ExperimentConfig cfg;
  cfg.registry = base;
  if (doc.contains("registry")) {
    cfg.registry_doc = doc.at("registry");
    cfg.registry.merge_json_text(cfg.registry_doc.dump());
  }
  cfg.core = parse_core(doc.at("core"));

  const json& m = doc.at("mission");
  MissionConfig& mission = cfg.mission;
  mission.env = m.value("env", mission.env);
  if (mission.env != "umap") throw ConfigError("unknown env '" + mission.env + "'");
  mission.task = m.value("task", std::string());
  if (!cfg.registry.has_task(mission.task)) throw ConfigError("unknown task '" + mission.task + "'");
  const TaskSpec& task = cfg.registry.task(mission.task);
  mission.map = m.value("map", task.map_id);
  if (!cfg.registry.has_map(mission.map)) throw ConfigError("unknown map '" + mission.map + "'");
  mission.mode = run_mode_from_string(m.value("mode", std::string("train")));
  if (m.contains("time")) mission.time = time_config_from_json(m.at("time"));
  if (m.contains("trace")) mission.trace = m.at("trace").get<std::string>();
  for (const auto& t : m.value("teams", json::array())) {
    mission.team_keys.push_back(t.is_string() ? t.get<std::string>() : t.value("algorithm", std::string()));
  }

  const json& algo = doc.at("algorithm");
  if (!algo.is_object()) throw ConfigError("'algorithm' must be an object");
  std::map<std::string, std::int32_t> key_owner;
  std::map<std::string, std::string> prefix_owner;
  for (std::size_t t = 0; t < task.teams.size(); ++t) {
    const std::string key = t < mission.team_keys.size() ? mission.team_keys[t] : std::string();
    const std::string label = "team " + std::to_string(t) + " ('" + task.teams[t].name + "')";
    if (key.empty()) throw ConfigError(label + " has no algorithm binding");
    if (!algo.contains(key)) throw ConfigError(label + " binds to '" + key + "', which has no algorithm entry");
    if (auto it = key_owner.find(key); it != key_owner.end())
      throw ConfigError("conflicting prefixes: teams " + std::to_string(it->second) + " and " +
                        std::to_string(t) + " both bind '" + key + "'; prefix one, e.g. 't" +
                        std::to_string(t + 1) + "." + split_key(key).second + "'");
    key_owner[key] = static_cast<std::int32_t>(t);

    PolicyBinding b;
    b.team = static_cast<std::int32_t>(t);
    b.key = key;
    std::tie(b.prefix, b.policy) = split_key(key);
    if (!is_known_policy(b.policy)) throw ConfigError("unknown policy '" + b.policy + "' in key '" + key + "'");
    if (!b.prefix.empty()) {
      if (auto it = prefix_owner.find(b.prefix); it != prefix_owner.end() && it->second != key)
        throw ConfigError("conflicting prefixes: '" + it->second + "' and '" + key + "' share prefix '" +
                          b.prefix + "'");
      prefix_owner[b.prefix] = key;
    }
    b.params = algo.at(key);
    if (b.params.is_null()) b.params = json::object();
    if (!b.params.is_object()) throw ConfigError("algorithm entry '" + key + "' must be an object");
    cfg.bindings.push_back(std::move(b));
  }
  if (mission.team_keys.size() > task.teams.size())
    throw ConfigError("mission lists " + std::to_string(mission.team_keys.size()) + " teams but task '" +
                      task.name + "' has " + std::to_string(task.teams.size()));
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path, const Registry& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return load_config(doc, base);
}

}  // namespace umap
