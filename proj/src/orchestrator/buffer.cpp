#include <bit>

#include "umap/orchestrator.hpp"

namespace umap {

namespace {

void put64(std::string& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>(v >> s));
}

void put_vec(std::string& out, const std::vector<double>& v) {
  put64(out, v.size());
  for (double x : v) put64(out, std::bit_cast<std::uint64_t>(x));
}

}  // namespace

std::string TeamBuffer::bytes() const {
  std::string out;
  put64(out, static_cast<std::uint64_t>(team_));
  put64(out, items_.size());
  for (const auto& t : items_) {
    put64(out, t.episode);
    put64(out, static_cast<std::uint64_t>(t.step));
    put64(out, static_cast<std::uint64_t>(t.agent_id));
    put_vec(out, t.obs);
    put64(out, static_cast<std::uint64_t>(t.action));
    put64(out, std::bit_cast<std::uint64_t>(t.reward));
    put_vec(out, t.next_obs);
    out.push_back(t.done ? 1 : 0);
  }
  return out;
}

TeamMap team_map(const WorldState& world) {
  TeamMap m;
  for (const auto& a : world.agents) m[a.agent_id] = a.team_id;
  return m;
}

void route_transitions(const StepRecord& record, const TeamMap& teams, std::vector<TeamBuffer>& buffers) {
  for (const auto& [id, action] : record.actions) {
    auto team = teams.find(id);
    if (team == teams.end())
      throw std::out_of_range("agent " + std::to_string(id) + " has no team in the routing map");
    if (team->second < 0 || static_cast<std::size_t>(team->second) >= buffers.size())
      throw std::out_of_range("agent " + std::to_string(id) + " maps to missing team buffer " +
                              std::to_string(team->second));
    Transition t;
    t.episode = record.episode;
    t.step = record.step;
    t.agent_id = id;
    t.obs = record.obs.at(id);
    t.action = action;
    auto r = record.rewards.find(id);
    t.reward = r == record.rewards.end() ? 0.0 : r->second;
    t.next_obs = record.next_obs.at(id);
    auto d = record.agent_done.find(id);
    t.done = d != record.agent_done.end() && d->second;
    buffers[static_cast<std::size_t>(team->second)].append(std::move(t));
  }
}

}  // namespace umap
