#include <optional>
#include <sstream>

#include <unistd.h>

#include "umap/serialization.hpp"
#include "umap/server.hpp"
#include "umap/trace.hpp"

namespace umap {

using protocol::Connection;
using protocol::Frame;
using protocol::FrameError;
using protocol::MessageKind;

WorldFactory registry_factory(const Registry& registry) {
  return [registry](const json& cfg) {
    Registry local = registry;
    if (cfg.contains("registry")) local.merge_json_text(cfg.at("registry").dump());
    const TimeConfig time =
        cfg.contains("time") ? time_config_from_json(cfg.at("time")) : TimeConfig::standard();
    const TaskSpec& task = local.task(cfg.at("task").get<std::string>());
    const MapSpec& map = local.map(cfg.value("map", task.map_id));
    auto sim = std::make_unique<Simulation>(task, map, time);
    sim->set_pacing(cfg.value("pacing", true));
    return sim;
  };
}

json status_body(const Simulation* sim) {
  json j = {{"server", "umap"}, {"protocol", protocol::kVersion}, {"configured", sim != nullptr}};
  if (sim) {
    j["task"] = sim->task().name;
    j["frame_index"] = sim->state().clock.frame_index;
    j["decision_index"] = sim->state().clock.decision_index;
    j["episode_step"] = sim->state().episode_step;
    j["frames_per_decision"] = sim->time().frames_per_decision();
    j["time"] = time_config_to_json(sim->time());
  }
  return j;
}

json step_response_body(const Simulation& sim, const StepOutcome* outcome) {
  const WorldState& w = sim.state();
  json obs = json::object();
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    const auto& a = w.agents[i];
    obs[std::to_string(a.team_id)][std::to_string(a.agent_id)] = sim.observation(i);
  }
  json perception = json::array();
  const PerceptionMatrix& m = sim.perception();
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::string row(m.size(), '0');
    for (std::size_t j = 0; j < m.size(); ++j) row[j] = m(i, j) ? '1' : '0';
    perception.push_back(std::move(row));
  }
  json body = {
      {"state", w},
      {"observations", std::move(obs)},
      {"perception", std::move(perception)},
      {"rewards", outcome ? rewards_to_json(outcome->rewards) : json::object()},
      {"events", outcome ? json(outcome->events) : json::array()},
      {"done", w.done},
      {"digest", digest_hex(sim.digest())},
      {"episode_step", w.episode_step},
      {"frame_index", w.clock.frame_index},
  };
  return body;
}

json actions_body(const JointAction& actions) {
  json a = json::object();
  for (const auto& [id, action] : actions) a[std::to_string(id)] = action;
  return {{"actions", std::move(a)}};
}

JointAction actions_from_body(const json& body) {
  JointAction actions;
  for (const auto& [key, value] : body.at("actions").items()) {
    std::size_t used = 0;
    const int id = std::stoi(key, &used);
    if (used != key.size()) throw std::invalid_argument("bad agent id '" + key + "'");
    actions[id] = value.get<std::int32_t>();
  }
  return actions;
}

json error_body(const std::string& code, const std::string& message) {
  return {{"code", code}, {"message", message}};
}

namespace {

// Per-connection state of one served world.
class Session {
 public:
  Session(Connection& conn, const ServeOptions& options) : conn_(conn), options_(options) {
    trace_dir_ = options.trace_dir ? options.trace_dir : trace_dir_from_env();
  }

  // Returns false once the connection should close.
  bool handle(const Frame& f, bool& shutdown) {
    switch (f.kind) {
      case MessageKind::Hello:
        conn_.send_json(MessageKind::Hello, status_body(sim_.get()));
        return true;
      case MessageKind::Configure: {
        const json cfg = json::parse(f.payload);
        sim_ = options_.factory(cfg);
        seed_ = cfg.value("seed", std::uint64_t{0});
        stream_trace_ = cfg.value("trace_stream", false);
        has_reset_ = false;
        json reply = status_body(sim_.get());
        reply["teams"] = json::array();
        for (const auto& t : sim_->task().teams) reply["teams"].push_back(t.name);
        conn_.send_json(MessageKind::Hello, reply);
        return true;
      }
      case MessageKind::Reset: {
        if (!sim_) return fail("NotConfigured", "Reset before Configure");
        const json body = f.payload.empty() ? json::object() : json::parse(f.payload);
        seed_ = body.value("seed", seed_);
        sim_->reset(seed_);
        has_reset_ = true;
        ++episode_;
        begin_trace();
        conn_.send_json(MessageKind::StepResponse, step_response_body(*sim_, nullptr));
        return true;
      }
      case MessageKind::StepRequest: {
        if (!sim_) return fail("NotConfigured", "StepRequest before Configure");
        if (!has_reset_) return fail("NotReset", "StepRequest before Reset");
        const JointAction actions = actions_from_body(json::parse(f.payload));
        StepOutcome out;
        try {
          out = sim_->step(actions);
        } catch (const ActionError& e) {
          return fail("ActionError", e.what());
        }
        record_step(actions);
        conn_.send_json(MessageKind::StepResponse, step_response_body(*sim_, &out));
        return true;
      }
      case MessageKind::Shutdown:
        conn_.send_json(MessageKind::Shutdown, {{"ok", true}});
        shutdown = true;
        return false;
      default:
        return fail("UnexpectedMessage",
                    std::string(protocol::to_string(f.kind)) + " is not a request");
    }
  }

  bool fail(const std::string& code, const std::string& message) {
    try {
      conn_.send_json(MessageKind::ErrorReport, error_body(code, message));
    } catch (const protocol::TransportError&) {
    }
    return false;
  }

 private:
  void begin_trace() {
    writer_.reset();
    trace_step_ = 0;
    if (!trace_dir_ && !stream_trace_) return;
    const Trace head = record_header(*sim_);
    if (trace_dir_) {
      std::ostringstream name;
      name << "trace_" << sim_->task().name << "_s" << seed_ << "_p" << ::getpid() << "_e" << episode_
           << ".umtr";
      writer_.emplace(*trace_dir_ / name.str(), head.header, head.reset_digest);
    }
    if (stream_trace_) chunk(encode_trace_header(head.header, head.reset_digest));
  }

  void record_step(const JointAction& actions) {
    if (!writer_ && !stream_trace_) return;
    const TraceStep s{++trace_step_, actions, sim_->digest()};
    std::vector<std::uint8_t> bytes = encode_trace_step(s);
    if (writer_) writer_->step(s);
    if (sim_->state().done) {
      const TraceEnd e{trace_step_, sim_->digest(), sim_->state().winner};
      if (writer_) writer_->end(e);
      const auto tail = encode_trace_end(e);
      bytes.insert(bytes.end(), tail.begin(), tail.end());
    }
    if (stream_trace_) chunk(bytes);
  }

  void chunk(const std::vector<std::uint8_t>& bytes) {
    conn_.send(MessageKind::TraceChunk, std::string(bytes.begin(), bytes.end()));
  }

  Connection& conn_;
  const ServeOptions& options_;
  std::unique_ptr<Simulation> sim_;
  std::uint64_t seed_ = 0;
  bool has_reset_ = false;
  bool stream_trace_ = false;
  std::uint64_t episode_ = 0;
  std::uint32_t trace_step_ = 0;
  std::optional<std::filesystem::path> trace_dir_;
  std::optional<TraceWriter> writer_;
};

}  // namespace

bool serve_connection(Connection& conn, const ServeOptions& options) {
  Session session(conn, options);
  bool shutdown = false;
  while (true) {
    Frame f;
    try {
      f = conn.receive();
    } catch (const FrameError& e) {
      session.fail(std::string(protocol::to_string(e.code())), e.what());
      break;
    } catch (const protocol::TransportError&) {
      break;
    }
    bool keep = false;
    try {
      keep = session.handle(f, shutdown);
    } catch (const protocol::TransportError&) {
      break;
    } catch (const std::exception& e) {
      // Malformed payloads, unknown tasks, bad configuration.
      session.fail("BadRequest", e.what());
      break;
    }
    if (!keep) break;
  }
  conn.close();
  return shutdown;
}

void serve_world(protocol::TcpListener& listener, const ServeOptions& options) {
  while (true) {
    protocol::Connection conn(listener.accept());
    if (serve_connection(conn, options)) return;
  }
}

}  // namespace umap
