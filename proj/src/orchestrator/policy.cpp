#include <cmath>
#include <limits>
#include <numbers>

#include "umap/orchestrator.hpp"
#include "umap/serialization.hpp"

namespace umap {

Rng policy_rng(std::uint64_t seed, std::int32_t team, std::uint64_t episode, std::int32_t step) {
  std::uint64_t h = mix64(seed ^ 0x706f6c6963790000ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(team));
  h = mix64(h ^ episode);
  h = mix64(h ^ static_cast<std::uint64_t>(step));
  return Rng::substream(h, Substream::Policy);
}

std::vector<std::size_t> living_members(const WorldState& world, std::int32_t team) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < world.agents.size(); ++i) {
    if (world.agents[i].alive && world.agents[i].team_id == team) out.push_back(i);
  }
  return out;
}

namespace {

// Compass action (1 N, 2 E, 3 S, 4 W) best aligned with `dir`; 0 when dir is zero.
int compass_toward(const Vec3& dir) {
  if (dir.x == 0.0 && dir.y == 0.0) return 0;
  if (std::abs(dir.x) > std::abs(dir.y)) return dir.x > 0.0 ? 2 : 4;
  return dir.y > 0.0 ? 1 : 3;
}

int nearest_perceived(const PolicyView& v, std::size_t i, const std::function<bool(const AgentState&)>& pred) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const auto& agents = v.state.agents;
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (j == i || !v.perception(i, j) || !agents[j].alive || !pred(agents[j])) continue;
    const double d = distance_sq(agents[i].position, agents[j].position);
    if (d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

const EntityState* find_entity(const WorldState& w, EntityKind kind) {
  for (const auto& e : w.entities) {
    if (e.kind == kind) return &e;
  }
  return nullptr;
}

const EntityState* nearest_landmark(const WorldState& w, const Vec3& from) {
  const EntityState* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : w.entities) {
    if (e.kind != EntityKind::Landmark) continue;
    const double d = planar_distance(from, e.position);
    if (d < best_d) {
      best = &e;
      best_d = d;
    }
  }
  return best;
}

// ---- rule-based scripts, one per scenario ----

void script_metal_clash(const PolicyView& v, JointAction& out) {
  const auto& agents = v.state.agents;
  for (std::size_t i : living_members(v.state, v.team)) {
    const AgentState& a = agents[i];
    if (a.kind == AgentKind::SupportDrone) {
      const int patient = nearest_perceived(v, i, [&](const AgentState& o) {
        return o.team_id == a.team_id && !o.airborne && o.hp < o.max_hp &&
               distance(a.position, o.position) <= a.params.support_range;
      });
      if (patient >= 0) {
        out[a.agent_id] = metal_clash::kHeal;
        continue;
      }
    }
    const int foe = nearest_perceived(v, i, [&](const AgentState& o) {
      return o.team_id != a.team_id && (a.kind != AgentKind::LaserCar || !o.airborne);
    });
    if (foe >= 0) {
      out[a.agent_id] = metal_clash::kAttackNearest;
      continue;
    }
    // Nothing in sight: advance on the opposing spawn area, then the centre.
    const std::size_t enemy = static_cast<std::size_t>(v.team == 0 ? 1 : 0);
    Vec3 goal = v.map.objective;
    if (enemy < v.map.spawn_regions.size()) {
      const Vec3 camp = v.map.spawn_regions[enemy].center;
      if (planar_distance(a.position, camp) > 500.0) goal = camp;
    }
    out[a.agent_id] = compass_toward(planar_direction(a.position, goal));
  }
}

void script_flag_capture(const PolicyView& v, JointAction& out) {
  const EntityState* flag = find_entity(v.state, EntityKind::Flag);
  const Vec3 flag_pos = flag ? flag->position : v.map.objective;
  const AgentState* holder = flag && flag->holder_id >= 0 ? v.state.find_agent(flag->holder_id) : nullptr;
  for (std::size_t i : living_members(v.state, v.team)) {
    const AgentState& a = v.state.agents[i];
    // Teammates of the carrier shadow it; everyone else goes for the flag.
    Vec3 goal = flag_pos;
    if (holder && holder->team_id == v.team && holder->agent_id != a.agent_id) goal = holder->position;
    const double bearing = std::atan2(goal.y - a.position.y, goal.x - a.position.x);
    int k = static_cast<int>(std::lround(bearing / (std::numbers::pi / 4.0)));
    out[a.agent_id] = ((k % 8) + 8) % 8;
  }
}

void script_monster_crisis(const PolicyView& v, JointAction& out) {
  const auto members = living_members(v.state, v.team);
  const EntityState* monster = find_entity(v.state, EntityKind::Monster);
  if (!monster || members.empty()) {
    for (std::size_t i : members) out[v.state.agents[i].agent_id] = monster_crisis::kStay;
    return;
  }
  // Converge on a rally point outside the monster's reach, then charge together.
  Vec3 centroid;
  for (std::size_t i : members) centroid = centroid + v.state.agents[i].position;
  centroid = centroid * (1.0 / static_cast<double>(members.size()));
  Vec3 side = planar_direction(monster->position, centroid);
  if (norm(side) == 0.0) side = {-1.0, 0.0, 0.0};
  const Vec3 rally = monster->position + side * (rules::kMonsterDefenseRange + 150.0);

  bool converged = true;
  bool engaged = false;
  for (std::size_t i : members) {
    const Vec3& p = v.state.agents[i].position;
    converged = converged && planar_distance(p, rally) <= 400.0;
    engaged = engaged || planar_distance(p, monster->position) <= rules::kMonsterDefenseRange;
  }
  for (std::size_t i : members) {
    const AgentState& a = v.state.agents[i];
    if (converged || engaged) {
      out[a.agent_id] = monster_crisis::kCollide;
    } else if (planar_distance(a.position, rally) > 150.0) {
      out[a.agent_id] = compass_toward(planar_direction(a.position, rally));
    } else {
      out[a.agent_id] = monster_crisis::kStay;
    }
  }
}

void script_navigation_game(const PolicyView& v, JointAction& out) {
  using namespace navigation_game;
  for (std::size_t i : living_members(v.state, v.team)) {
    const AgentState& a = v.state.agents[i];
    switch (a.kind) {
      case AgentKind::GroundKeeper: {
        const int target = nearest_perceived(
            v, i, [](const AgentState& o) { return o.kind == AgentKind::AirNavigator; });
        if (target >= 0) {
          out[a.agent_id] = compass_toward(planar_direction(a.position, v.state.agents[target].position));
        } else if (const EntityState* l = nearest_landmark(v.state, a.position);
                   l && planar_distance(a.position, l->position) > rules::kInteractionRange) {
          out[a.agent_id] = compass_toward(planar_direction(a.position, l->position));
        } else {
          out[a.agent_id] = kIdle;
        }
        break;
      }
      case AgentKind::AirNavigator: {
        const int keeper = nearest_perceived(v, i, [](const AgentState& o) {
          return o.kind == AgentKind::GroundKeeper;
        });
        const bool threatened =
            keeper >= 0 && planar_distance(a.position, v.state.agents[keeper].position) <= 700.0;
        out[a.agent_id] = threatened ? kFlee : kTowardLandmark;
        break;
      }
      default: {
        // Ground navigators escort: push keepers away when they show up.
        const int keeper = nearest_perceived(v, i, [](const AgentState& o) {
          return o.kind == AgentKind::GroundKeeper;
        });
        out[a.agent_id] = keeper >= 0 ? kTowardFoe : kTowardLandmark;
        break;
      }
    }
  }
}

class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::string scenario) : scenario_(std::move(scenario)) {}
  std::string_view name() const override { return "scripted"; }
  JointAction act(const PolicyView& v, bool, Rng&) const override {
    JointAction out;
    if (scenario_ == "metal_clash") {
      script_metal_clash(v, out);
    } else if (scenario_ == "flag_capture") {
      script_flag_capture(v, out);
    } else if (scenario_ == "monster_crisis") {
      script_monster_crisis(v, out);
    } else {
      script_navigation_game(v, out);
    }
    return out;
  }

 private:
  std::string scenario_;
};

class RandomPolicy final : public Policy {
 public:
  std::string_view name() const override { return "random"; }
  JointAction act(const PolicyView& v, bool, Rng& rng) const override {
    JointAction out;
    for (std::size_t i : living_members(v.state, v.team)) {
      const auto id = v.state.agents[i].agent_id;
      out[id] = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(v.action_counts.at(id))));
    }
    return out;
  }
};

// Replays fixed per-step action maps: {"steps": [{"<id>": action, ...}, ...]}.
// Steps beyond the recording, and agents missing from it, take action 0.
class RecordedPolicy final : public Policy {
 public:
  explicit RecordedPolicy(const json& params) {
    for (const auto& step : params.value("steps", json::array())) {
      steps_.push_back(actions_from_body(json{{"actions", step}}));
    }
  }
  std::string_view name() const override { return "recorded"; }
  JointAction act(const PolicyView& v, bool, Rng&) const override {
    JointAction out;
    const JointAction* rec =
        v.step >= 0 && static_cast<std::size_t>(v.step) < steps_.size() ? &steps_[v.step] : nullptr;
    for (std::size_t i : living_members(v.state, v.team)) {
      const auto id = v.state.agents[i].agent_id;
      auto it = rec ? rec->find(id) : JointAction::const_iterator{};
      out[id] = rec && it != rec->end() ? it->second : 0;
    }
    return out;
  }

 private:
  std::vector<JointAction> steps_;
};

// Delegates to an out-of-process policy over the frame protocol: we send a
// StepResponse carrying the team's observations and expect a StepRequest
// with the team's actions back.
class ExternalPolicy final : public Policy {
 public:
  explicit ExternalPolicy(const json& params)
      : host_(params.value("host", std::string("127.0.0.1"))),
        port_(params.value("port", 0)) {
    if (port_ <= 0 || port_ > 65535) throw ConfigError("external policy needs a valid 'port'");
  }
  std::string_view name() const override { return "external"; }
  JointAction act(const PolicyView& v, bool explore, Rng&) const override {
    if (!conn_) {
      conn_ = std::make_unique<protocol::Connection>(
          protocol::TcpStream::connect(host_, static_cast<std::uint16_t>(port_)));
    }
    json obs = json::object();
    for (const auto& [id, o] : v.observations) obs[std::to_string(id)] = o;
    json counts = json::object();
    for (std::size_t i : living_members(v.state, v.team)) {
      const auto id = v.state.agents[i].agent_id;
      counts[std::to_string(id)] = v.action_counts.at(id);
    }
    conn_->send_json(protocol::MessageKind::StepResponse,
                     {{"team", v.team}, {"episode", v.episode}, {"step", v.step}, {"explore", explore},
                      {"observations", std::move(obs)}, {"action_counts", std::move(counts)}});
    const protocol::Frame f = conn_->receive();
    if (f.kind != protocol::MessageKind::StepRequest)
      throw std::runtime_error("external policy answered with " + std::string(protocol::to_string(f.kind)));
    return actions_from_body(json::parse(f.payload));
  }

 private:
  std::string host_;
  int port_;
  mutable std::unique_ptr<protocol::Connection> conn_;
};

}  // namespace

// ---- tabular Q ----

std::uint64_t discretize(const std::string& scenario, std::span<const double> obs) {
  auto bucket = [](double x, std::initializer_list<double> edges) {
    std::uint64_t b = 0;
    for (double e : edges) {
      if (x > e) ++b;
    }
    return b;
  };
  if (scenario == "monster_crisis" && obs.size() >= 9 * kBaseFeatureDim) {
    // Monster entity slot follows self + 7 ally slots.
    const auto m = obs.subspan(8 * kBaseFeatureDim, kBaseFeatureDim);
    const std::uint64_t dist = bucket(m[19], {250.0, 600.0, 1000.0, 1500.0, 2200.0});
    double angle = std::atan2(m[7], m[6]);
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    const auto octant = static_cast<std::uint64_t>(std::floor(angle / (std::numbers::pi / 4.0))) % 8;
    const std::uint64_t monster_hp = bucket(m[15], {0.25, 0.5, 0.75});
    const std::uint64_t own_hp = obs[15] > 0.5 ? 1 : 0;
    return ((dist * 8 + octant) * 4 + monster_hp) * 2 + own_hp;
  }
  // Generic fallback: coarse absolute position grid plus own health.
  if (obs.size() < 16) return 0;
  const auto gx = static_cast<std::int64_t>(std::floor(obs[6] / 1000.0));
  const auto gy = static_cast<std::int64_t>(std::floor(obs[7] / 1000.0));
  const std::uint64_t hp = bucket(obs[15], {0.33, 0.66});
  return mix64((static_cast<std::uint64_t>(gx) << 32) ^ static_cast<std::uint32_t>(gy)) ^ hp;
}

TabularQ::TabularQ(std::string scenario, int num_actions, TabularQParams params)
    : scenario_(std::move(scenario)), num_actions_(num_actions), params_(params) {
  if (num_actions_ <= 0) throw std::invalid_argument("tabular_q needs a positive action count");
  if (!(params_.learning_rate > 0.0 && params_.learning_rate <= 1.0))
    throw ConfigError("tabular_q learning_rate must lie in (0, 1]");
  if (!(params_.gamma >= 0.0 && params_.gamma < 1.0)) throw ConfigError("tabular_q gamma must lie in [0, 1)");
  if (!(params_.epsilon >= 0.0 && params_.epsilon <= 1.0)) throw ConfigError("tabular_q epsilon must lie in [0, 1]");
}

std::vector<double>& TabularQ::row(std::uint64_t s) {
  auto [it, inserted] = table_.try_emplace(s);
  if (inserted) it->second.assign(static_cast<std::size_t>(num_actions_), 0.0);
  return it->second;
}

double TabularQ::q(std::uint64_t s, int a) const {
  auto it = table_.find(s);
  return it == table_.end() ? 0.0 : it->second.at(static_cast<std::size_t>(a));
}

int TabularQ::greedy(std::uint64_t s) const {
  auto it = table_.find(s);
  if (it == table_.end()) return 0;
  const auto& r = it->second;
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

void TabularQ::td_update(std::uint64_t s, int a, double r, std::uint64_t s_next, bool done) {
  double target = r;
  if (!done) {
    auto it = table_.find(s_next);
    const double best = it == table_.end() ? 0.0 : *std::max_element(it->second.begin(), it->second.end());
    target += params_.gamma * best;
  }
  double& cell = row(s).at(static_cast<std::size_t>(a));
  cell += params_.learning_rate * (target - cell);
}

JointAction TabularQ::act(const PolicyView& v, bool explore, Rng& rng) const {
  JointAction out;
  for (const auto& [id, obs] : v.observations) {
    const int n = std::min(num_actions_, v.action_counts.at(id));
    const double u = rng.uniform();
    int a = greedy(discretize(scenario_, obs));
    if (explore && u < params_.epsilon) a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    out[id] = std::min(a, n - 1);
  }
  return out;
}

void TabularQ::update(std::span<const Transition> batch) {
  for (const auto& t : batch) {
    td_update(discretize(scenario_, t.obs), t.action, t.reward, discretize(scenario_, t.next_obs), t.done);
  }
}

json TabularQ::save() const {
  // Sorted for a canonical checkpoint.
  std::map<std::uint64_t, std::vector<double>> sorted(table_.begin(), table_.end());
  json rows = json::object();
  for (const auto& [s, r] : sorted) rows[std::to_string(s)] = r;
  return {{"policy", "tabular_q"},
          {"num_actions", num_actions_},
          {"learning_rate", params_.learning_rate},
          {"gamma", params_.gamma},
          {"epsilon", params_.epsilon},
          {"table", std::move(rows)}};
}

void TabularQ::load(const json& j) {
  table_.clear();
  for (const auto& [key, r] : j.at("table").items()) {
    auto values = r.get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(num_actions_))
      throw std::invalid_argument("checkpoint row has the wrong action count");
    table_[std::stoull(key)] = std::move(values);
  }
}

bool is_known_policy(const std::string& id) {
  return id == "scripted" || id == "random" || id == "tabular_q" || id == "recorded" || id == "external";
}

std::unique_ptr<Policy> make_policy(const PolicyBinding& b, const TaskSpec& task) {
  if (b.policy == "scripted") return std::make_unique<ScriptedPolicy>(task.scenario);
  if (b.policy == "random") return std::make_unique<RandomPolicy>();
  if (b.policy == "recorded") return std::make_unique<RecordedPolicy>(b.params);
  if (b.policy == "external") return std::make_unique<ExternalPolicy>(b.params);
  if (b.policy == "tabular_q") {
    // One table shared by the team; sized for the widest action set.
    auto scenario = make_scenario(task.scenario);
    int actions = 1;
    for (const auto& [kind, count] : task.teams.at(b.team).members) {
      actions = std::max(actions, scenario->profile(kind, task).num_actions);
    }
    TabularQParams p;
    p.learning_rate = b.params.value("learning_rate", p.learning_rate);
    p.gamma = b.params.value("gamma", task.gamma);
    p.epsilon = b.params.value("epsilon", p.epsilon);
    return std::make_unique<TabularQ>(task.scenario, actions, p);
  }
  throw ConfigError("unknown policy '" + b.policy + "'");
}

}  // namespace umap
