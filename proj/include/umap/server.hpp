#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "umap/protocol.hpp"
#include "umap/simulation.hpp"

namespace umap {

// Builds the world named by a Configure payload:
//   {"task": name, "map": id, "time": {...}, "seed": n, "trace_stream": bool,
//    "pacing": bool, "registry": {"maps": [...], "tasks": [...]}}
// Only "task" is required.
using WorldFactory = std::function<std::unique_ptr<Simulation>(const nlohmann::json& configure)>;
WorldFactory registry_factory(const Registry& registry);

struct ServeOptions {
  WorldFactory factory;
  // Trace files go here when set; defaults to UMAP_TRACE_DIR.
  std::optional<std::filesystem::path> trace_dir;
};

// Payload bodies shared by the server and its clients.
nlohmann::json status_body(const Simulation* sim);
nlohmann::json step_response_body(const Simulation& sim, const StepOutcome* outcome);
nlohmann::json actions_body(const JointAction& actions);
JointAction actions_from_body(const nlohmann::json& body);
nlohmann::json error_body(const std::string& code, const std::string& message);

// Serves one connection in lockstep. Returns true when the peer asked for
// Shutdown, false when it disconnected or was sent an ErrorReport.
bool serve_connection(protocol::Connection& conn, const ServeOptions& options);
// Accepts one connection at a time until a Shutdown arrives.
void serve_world(protocol::TcpListener& listener, const ServeOptions& options);

enum class Transport { Tcp, Shmem };
Transport transport_from_string(const std::string& name);
std::string to_string(Transport transport);

struct PoolOptions {
  std::size_t workers = 1;
  Transport transport = Transport::Tcp;
  ServeOptions serve;
};

struct WorkerReply {
  bool ok = false;            // false: WorkerFailed for this slot
  protocol::Frame frame;      // the reply (StepResponse, Hello, ...)
  std::vector<std::string> trace_chunks;
  std::string error;
  nlohmann::json body() const { return nlohmann::json::parse(frame.payload); }
};

// Forked worker processes, one served world each, one connection each.
// Each worker has at most one request in flight.
class WorkerPool {
 public:
  explicit WorkerPool(PoolOptions options);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return workers_.size(); }
  int pid(std::size_t i) const { return workers_.at(i).pid; }
  bool alive(std::size_t i) const { return !workers_.at(i).failed; }

  // One request/reply on worker i; a dead or misbehaving worker yields !ok.
  WorkerReply request(std::size_t i, protocol::MessageKind kind, const std::string& payload);
  // Scatters payloads[i] to worker i concurrently and gathers the replies by
  // worker index.
  std::vector<WorkerReply> broadcast(protocol::MessageKind kind, const std::vector<std::string>& payloads);

  // SIGKILLs a worker (fault injection).
  void kill(std::size_t i);
  void shutdown();

 private:
  struct Worker {
    int pid = -1;
    std::unique_ptr<protocol::Connection> conn;
    int fd = -1;  // TCP socket, closed in later children
    bool failed = false;
  };
  void spawn(std::size_t index);
  void reap(Worker& w);

  PoolOptions options_;
  std::vector<Worker> workers_;
};

std::vector<WorkerReply> pool_configure(WorkerPool& pool, const std::vector<nlohmann::json>& configs);
std::vector<WorkerReply> pool_reset(WorkerPool& pool, const std::vector<std::uint64_t>& seeds);
std::vector<WorkerReply> pool_step(WorkerPool& pool, const std::vector<JointAction>& actions);

}  // namespace umap
