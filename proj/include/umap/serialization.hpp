#pragma once

// JSON forms of the domain types. These are the payload schemas of the wire
// protocol and the registry data file; doubles round-trip exactly.

#include <nlohmann/json.hpp>

#include "umap/scenario.hpp"
#include "umap/timeflow.hpp"
#include "umap/world.hpp"

namespace umap {

using json = nlohmann::json;

void to_json(json& j, const Vec3& v);
void from_json(const json& j, Vec3& v);
void to_json(json& j, const Box& b);
void from_json(const json& j, Box& b);

void to_json(json& j, const TeamRoster& t);
void from_json(const json& j, TeamRoster& t);
void to_json(json& j, const TaskSpec& t);
void from_json(const json& j, TaskSpec& t);
void to_json(json& j, const MapSpec& m);
void from_json(const json& j, MapSpec& m);

void to_json(json& j, const Event& e);
void from_json(const json& j, Event& e);
void to_json(json& j, const AgentState& a);
void from_json(const json& j, AgentState& a);
void to_json(json& j, const EntityState& e);
void from_json(const json& j, EntityState& e);
void to_json(json& j, const WorldState& w);
void from_json(const json& j, WorldState& w);

// TimeConfig has no default constructor, so it gets explicit helpers.
// Dilation is written as the string "max" when unpaced.
json time_config_to_json(const TimeConfig& cfg);
TimeConfig time_config_from_json(const json& j);

json rewards_to_json(const RewardMap& rewards);
RewardMap rewards_from_json(const json& j);

}  // namespace umap
