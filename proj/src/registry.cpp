#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "umap/scenario.hpp"
#include "umap/serialization.hpp"

namespace umap {

namespace {

constexpr std::string_view kBuiltinTasks =
#include "umap/builtin_tasks.inc"
    ;

bool box_inside(const Box& inner, const Box& outer) {
  auto axis_inside = [](double c, double h, double oc, double oh) {
    return c - h >= oc - oh && c + h <= oc + oh;
  };
  return axis_inside(inner.center.x, inner.half.x, outer.center.x, outer.half.x) &&
         axis_inside(inner.center.y, inner.half.y, outer.center.y, outer.half.y);
}

}  // namespace

int TeamRoster::size() const {
  int total = 0;
  for (const auto& m : members) total += m.second;
  return total;
}

double TaskSpec::override_or(const std::string& key, double fallback) const {
  auto it = overrides.find(key);
  return it == overrides.end() ? fallback : it->second;
}

std::size_t TaskSpec::agent_count() const {
  std::size_t total = 0;
  for (const auto& t : teams) total += static_cast<std::size_t>(t.size());
  return total;
}

void TaskSpec::validate() const {
  if (teams.empty()) throw std::invalid_argument("task '" + name + "' has no teams");
  bool any_learnable = false;
  for (const auto& t : teams) {
    if (t.members.empty()) throw std::invalid_argument("task '" + name + "' has an empty team");
    for (const auto& [kind, count] : t.members) {
      if (count < 0) throw std::invalid_argument("task '" + name + "' has a negative roster count");
    }
    if (t.size() == 0) throw std::invalid_argument("task '" + name + "' has an empty team");
    any_learnable = any_learnable || t.learnable;
  }
  if (!any_learnable) throw std::invalid_argument("task '" + name + "' has no learnable team");
  if (max_episode_steps <= 0) throw std::invalid_argument("max_episode_steps must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
}

void MapSpec::validate() const {
  for (const auto& s : spawn_regions) {
    if (!box_inside(s, bounds))
      throw std::invalid_argument("map '" + id + "' has a spawn region outside its bounds");
  }
  for (const auto& l : landmarks) {
    if (!bounds.contains({l.x, l.y, bounds.center.z}))
      throw std::invalid_argument("map '" + id + "' has a landmark outside its bounds");
  }
  if (spawn_regions.empty()) throw std::invalid_argument("map '" + id + "' has no spawn region");
}

Vec3 Scenario::frame_command(const WorldState&, const AgentState& agent,
                             const StepContext&) const {
  return agent.command;
}

const Registry& Registry::builtin() {
  static const Registry registry = from_json_text(kBuiltinTasks);
  return registry;
}

Registry Registry::from_json_text(std::string_view text) {
  Registry r;
  r.merge_json_text(text);
  return r;
}

void Registry::merge_json_text(std::string_view text) {
  const json doc = json::parse(text);
  for (const auto& m : doc.value("maps", json::array())) register_map(m.get<MapSpec>());
  for (const auto& t : doc.value("tasks", json::array())) register_task(t.get<TaskSpec>());
}

void Registry::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open registry file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_json_text(buf.str());
}

void Registry::register_task(TaskSpec task) {
  task.validate();
  make_scenario(task.scenario);  // rejects unknown scenarios
  tasks_.insert_or_assign(task.name, std::move(task));
}

void Registry::register_map(MapSpec map) {
  map.validate();
  maps_.insert_or_assign(map.id, std::move(map));
}

const TaskSpec& Registry::task(std::string_view name) const {
  auto it = tasks_.find(name);
  if (it == tasks_.end()) throw std::out_of_range("unknown task '" + std::string(name) + "'");
  return it->second;
}

const MapSpec& Registry::map(std::string_view id) const {
  auto it = maps_.find(id);
  if (it == maps_.end()) throw std::out_of_range("unknown map '" + std::string(id) + "'");
  return it->second;
}

bool Registry::has_task(std::string_view name) const { return tasks_.find(name) != tasks_.end(); }
bool Registry::has_map(std::string_view id) const { return maps_.find(id) != maps_.end(); }

std::vector<std::string> Registry::task_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : tasks_) names.push_back(name);
  return names;
}

std::vector<std::string> Registry::map_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : maps_) ids.push_back(id);
  return ids;
}

double win_rate(std::span<const std::int32_t> outcomes, std::int32_t team) {
  if (outcomes.empty()) throw std::invalid_argument("win_rate needs at least one episode");
  const auto wins = std::count(outcomes.begin(), outcomes.end(), team);
  return static_cast<double>(wins) / static_cast<double>(outcomes.size());
}

}  // namespace umap
