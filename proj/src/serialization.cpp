#include "umap/serialization.hpp"

#include <string>

namespace umap {

void to_json(json& j, const Vec3& v) { j = json::array({v.x, v.y, v.z}); }

void from_json(const json& j, Vec3& v) {
  v.x = j.at(0).get<double>();
  v.y = j.at(1).get<double>();
  v.z = j.at(2).get<double>();
}

void to_json(json& j, const Box& b) { j = json{{"center", b.center}, {"half", b.half}}; }

void from_json(const json& j, Box& b) {
  j.at("center").get_to(b.center);
  j.at("half").get_to(b.half);
}

void to_json(json& j, const TeamRoster& t) {
  json members = json::array();
  for (const auto& [kind, count] : t.members) members.push_back({std::string(to_string(kind)), count});
  j = json{{"name", t.name}, {"members", members}, {"learnable", t.learnable}};
}

void from_json(const json& j, TeamRoster& t) {
  t.name = j.value("name", std::string{});
  t.learnable = j.value("learnable", true);
  t.members.clear();
  for (const auto& m : j.at("members")) {
    t.members.emplace_back(agent_kind_from_string(m.at(0).get<std::string>()), m.at(1).get<int>());
  }
}

void to_json(json& j, const TaskSpec& t) {
  j = json{{"name", t.name},
           {"scenario", t.scenario},
           {"map", t.map_id},
           {"max_episode_steps", t.max_episode_steps},
           {"parallel_envs", t.parallel_envs},
           {"gamma", t.gamma},
           {"teams", t.teams},
           {"overrides", t.overrides}};
}

void from_json(const json& j, TaskSpec& t) {
  t.name = j.at("name").get<std::string>();
  t.scenario = j.at("scenario").get<std::string>();
  t.map_id = j.at("map").get<std::string>();
  t.max_episode_steps = j.value("max_episode_steps", 100);
  t.parallel_envs = j.value("parallel_envs", 32);
  t.gamma = j.value("gamma", 0.99);
  t.teams = j.at("teams").get<std::vector<TeamRoster>>();
  t.overrides = j.value("overrides", std::map<std::string, double>{});
}

void to_json(json& j, const MapSpec& m) {
  j = json{{"id", m.id},
           {"bounds", m.bounds},
           {"obstacles", m.obstacles},
           {"landmarks", m.landmarks},
           {"spawn_regions", m.spawn_regions},
           {"objective", m.objective}};
}

void from_json(const json& j, MapSpec& m) {
  m.id = j.at("id").get<std::string>();
  j.at("bounds").get_to(m.bounds);
  m.obstacles = j.value("obstacles", std::vector<Box>{});
  m.landmarks = j.value("landmarks", std::vector<Vec3>{});
  m.spawn_regions = j.at("spawn_regions").get<std::vector<Box>>();
  m.objective = j.value("objective", Vec3{});
}

void to_json(json& j, const Event& e) {
  j = json{{"kind", std::string(to_string(e.kind))},
           {"frame", e.frame_index},
           {"subject", e.subject_id}};
  if (e.object_id) j["object"] = *e.object_id;
  if (e.magnitude) j["magnitude"] = *e.magnitude;
}

void from_json(const json& j, Event& e) {
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.frame_index = j.at("frame").get<std::int64_t>();
  e.subject_id = j.at("subject").get<std::int32_t>();
  e.object_id = j.contains("object") ? std::optional(j["object"].get<std::int32_t>()) : std::nullopt;
  e.magnitude = j.contains("magnitude") ? std::optional(j["magnitude"].get<double>()) : std::nullopt;
}

void to_json(json& j, const AgentState& a) {
  j = json{{"id", a.agent_id},
           {"team", a.team_id},
           {"kind", std::string(to_string(a.kind))},
           {"position", a.position},
           {"velocity", a.velocity},
           {"heading", a.heading},
           {"hp", a.hp},
           {"max_hp", a.max_hp},
           {"max_speed", a.max_speed},
           {"alive", a.alive},
           {"airborne", a.airborne},
           {"attack_power", a.params.attack_power},
           {"attack_range", a.params.attack_range},
           {"observation_range", a.params.observation_range},
           {"support_range", a.params.support_range},
           {"action", a.action},
           {"command", a.command},
           {"target", a.target_id},
           {"pursue", a.pursue},
           {"forced_velocity", a.forced_velocity},
           {"forced_frames", a.forced_frames},
           {"hold_frames", a.hold_frames}};
}

void from_json(const json& j, AgentState& a) {
  a.agent_id = j.at("id").get<std::int32_t>();
  a.team_id = j.at("team").get<std::int32_t>();
  a.kind = agent_kind_from_string(j.at("kind").get<std::string>());
  j.at("position").get_to(a.position);
  j.at("velocity").get_to(a.velocity);
  j.at("heading").get_to(a.heading);
  a.hp = j.at("hp").get<double>();
  a.max_hp = j.at("max_hp").get<double>();
  a.max_speed = j.at("max_speed").get<double>();
  a.alive = j.at("alive").get<bool>();
  a.airborne = j.at("airborne").get<bool>();
  a.params.attack_power = j.at("attack_power").get<double>();
  a.params.attack_range = j.at("attack_range").get<double>();
  a.params.observation_range = j.at("observation_range").get<double>();
  a.params.support_range = j.at("support_range").get<double>();
  a.action = j.at("action").get<std::int32_t>();
  j.at("command").get_to(a.command);
  a.target_id = j.at("target").get<std::int32_t>();
  a.pursue = j.at("pursue").get<bool>();
  j.at("forced_velocity").get_to(a.forced_velocity);
  a.forced_frames = j.at("forced_frames").get<std::int64_t>();
  a.hold_frames = j.at("hold_frames").get<std::int64_t>();
}

void to_json(json& j, const EntityState& e) {
  j = json{{"id", e.entity_id},         {"kind", std::string(to_string(e.kind))},
           {"position", e.position},    {"extent", e.extent},
           {"hp", e.hp},                {"max_hp", e.max_hp},
           {"holder", e.holder_id},     {"holder_team", e.holder_team},
           {"active", e.active}};
}

void from_json(const json& j, EntityState& e) {
  e.entity_id = j.at("id").get<std::int32_t>();
  const auto kind = j.at("kind").get<std::string>();
  e.kind = kind == "flag"       ? EntityKind::Flag
           : kind == "landmark" ? EntityKind::Landmark
           : kind == "monster"  ? EntityKind::Monster
                                : EntityKind::Obstacle;
  j.at("position").get_to(e.position);
  j.at("extent").get_to(e.extent);
  e.hp = j.at("hp").get<double>();
  e.max_hp = j.at("max_hp").get<double>();
  e.holder_id = j.at("holder").get<std::int32_t>();
  e.holder_team = j.at("holder_team").get<std::int32_t>();
  e.active = j.at("active").get<bool>();
}

void to_json(json& j, const WorldState& w) {
  j = json{{"frame_index", w.clock.frame_index},
           {"decision_index", w.clock.decision_index},
           {"agents", w.agents},
           {"entities", w.entities},
           {"rng", w.rng.state()},
           {"episode_step", w.episode_step},
           {"done", w.done},
           {"events", w.pending_events},
           {"team_counters", w.team_counters},
           {"num_teams", w.num_teams},
           {"winner", w.winner}};
}

void from_json(const json& j, WorldState& w) {
  w.clock.frame_index = j.at("frame_index").get<std::int64_t>();
  w.clock.decision_index = j.at("decision_index").get<std::int64_t>();
  w.agents = j.at("agents").get<std::vector<AgentState>>();
  w.entities = j.at("entities").get<std::vector<EntityState>>();
  w.rng = Rng(j.at("rng").get<std::uint64_t>());
  w.episode_step = j.at("episode_step").get<std::int32_t>();
  w.done = j.at("done").get<bool>();
  w.pending_events = j.at("events").get<std::vector<Event>>();
  w.team_counters = j.at("team_counters").get<std::vector<std::int64_t>>();
  w.num_teams = j.at("num_teams").get<std::int32_t>();
  w.winner = j.at("winner").get<std::int32_t>();
}

json time_config_to_json(const TimeConfig& cfg) {
  json j{{"decision_interval", cfg.decision_interval()},
         {"frame_rate", cfg.baseline_frame_rate()}};
  if (cfg.unpaced()) {
    j["dilation"] = "max";
  } else {
    j["dilation"] = cfg.dilation_factor();
  }
  return j;
}

TimeConfig time_config_from_json(const json& j) {
  double dilation = 1.0;
  if (j.contains("dilation")) {
    const auto& d = j["dilation"];
    dilation = d.is_string() ? parse_dilation(d.get<std::string>()) : d.get<double>();
  }
  return TimeConfig(j.value("decision_interval", 0.5), j.value("frame_rate", 2560.0), dilation);
}

json rewards_to_json(const RewardMap& rewards) {
  json j = json::object();
  for (const auto& [id, r] : rewards) j[std::to_string(id)] = r;
  return j;
}

RewardMap rewards_from_json(const json& j) {
  RewardMap out;
  for (const auto& [key, value] : j.items()) out[std::stoi(key)] = value.get<double>();
  return out;
}

}  // namespace umap
