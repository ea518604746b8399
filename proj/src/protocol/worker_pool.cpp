#include <signal.h>
#include <sys/wait.h>
#include <malloc.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "umap/perception.hpp"
#include "umap/server.hpp"

namespace umap {

using protocol::Connection;
using protocol::MessageKind;

Transport transport_from_string(const std::string& name) {
  if (name == "tcp") return Transport::Tcp;
  if (name == "shmem") return Transport::Shmem;
  throw std::invalid_argument("unknown transport '" + name + "' (expected tcp or shmem)");
}

std::string to_string(Transport transport) { return transport == Transport::Tcp ? "tcp" : "shmem"; }

WorkerPool::WorkerPool(PoolOptions options) : options_(std::move(options)) {
  if (options_.workers == 0) throw std::invalid_argument("a worker pool needs at least one worker");
  if (!options_.serve.factory) options_.serve.factory = registry_factory(Registry::builtin());
  workers_.resize(options_.workers);
  for (std::size_t i = 0; i < workers_.size(); ++i) spawn(i);
}

WorkerPool::~WorkerPool() { shutdown(); }

void WorkerPool::spawn(std::size_t index) {
  Worker& w = workers_[index];
  std::unique_ptr<protocol::TcpListener> listener;
  std::shared_ptr<protocol::ShmemChannel> channel;
  if (options_.transport == Transport::Tcp) {
    listener = std::make_unique<protocol::TcpListener>(0);
  } else {
    channel = protocol::ShmemChannel::create();
  }

  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    // Child: serve one world until Shutdown. Never return into the caller.
    int status = 0;
    try {
      kernels::set_parallel_enabled(false);
      // Hand back the parent's free heap pages so the worker's resident set
      // reflects its own world, not whatever the parent had freed.
      ::malloc_trim(0);
      for (std::size_t j = 0; j < index; ++j) {
        if (workers_[j].fd >= 0) ::close(workers_[j].fd);
      }
      std::unique_ptr<protocol::Stream> stream;
      if (listener) {
        stream = listener->accept();
        listener->close();
      } else {
        stream = channel->open(1);
      }
      Connection conn(std::move(stream));
      serve_connection(conn, options_.serve);
    } catch (...) {
      status = 1;
    }
    ::_exit(status);
  }

  w.pid = pid;
  if (listener) {
    auto stream = protocol::TcpStream::connect("127.0.0.1", listener->port());
    w.fd = stream->fd();
    listener->close();
    w.conn = std::make_unique<Connection>(std::move(stream));
  } else {
    channel->set_owner(1, pid);
    w.conn = std::make_unique<Connection>(channel->open(0));
  }
}

WorkerReply WorkerPool::request(std::size_t i, MessageKind kind, const std::string& payload) {
  Worker& w = workers_.at(i);
  WorkerReply reply;
  if (w.failed) {
    reply.error = "WorkerFailed: worker " + std::to_string(i) + " is gone";
    return reply;
  }
  try {
    w.conn->send(kind, payload);
    while (true) {
      protocol::Frame f = w.conn->receive();
      if (f.kind == MessageKind::TraceChunk) {
        reply.trace_chunks.push_back(std::move(f.payload));
        continue;
      }
      if (f.kind == MessageKind::ErrorReport) {
        // The worker closes its side after reporting.
        w.failed = true;
        reply.error = "WorkerFailed: " + f.payload;
        reply.frame = std::move(f);
        return reply;
      }
      reply.frame = std::move(f);
      reply.ok = true;
      return reply;
    }
  } catch (const std::exception& e) {
    w.failed = true;
    reply.error = std::string("WorkerFailed: ") + e.what();
    return reply;
  }
}

std::vector<WorkerReply> WorkerPool::broadcast(MessageKind kind, const std::vector<std::string>& payloads) {
  if (payloads.size() != workers_.size())
    throw std::invalid_argument("broadcast needs one payload per worker");
  std::vector<WorkerReply> replies(workers_.size());
  std::vector<std::thread> threads;
  threads.reserve(workers_.size());
  for (std::size_t i = 0; i < workers_.size(); ++i) {
    threads.emplace_back([&, i] { replies[i] = request(i, kind, payloads[i]); });
  }
  for (auto& t : threads) t.join();
  return replies;
}

void WorkerPool::kill(std::size_t i) {
  Worker& w = workers_.at(i);
  if (w.pid > 0) ::kill(w.pid, SIGKILL);
}

void WorkerPool::reap(Worker& w) {
  if (w.pid <= 0) return;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (true) {
    int status = 0;
    const pid_t r = ::waitpid(w.pid, &status, WNOHANG);
    if (r == w.pid || r < 0) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(w.pid, SIGKILL);
      ::waitpid(w.pid, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  w.pid = -1;
}

void WorkerPool::shutdown() {
  for (auto& w : workers_) {
    if (w.conn && !w.failed) {
      try {
        w.conn->send(MessageKind::Shutdown, "{}");
        while (w.conn->receive().kind != MessageKind::Shutdown) {
        }
      } catch (const std::exception&) {
      }
    }
    if (w.conn) w.conn->close();
    w.conn.reset();
    w.fd = -1;
    w.failed = true;
  }
  for (auto& w : workers_) reap(w);
}

std::vector<WorkerReply> pool_configure(WorkerPool& pool, const std::vector<nlohmann::json>& configs) {
  std::vector<std::string> payloads;
  for (const auto& c : configs) payloads.push_back(c.dump());
  return pool.broadcast(MessageKind::Configure, payloads);
}

std::vector<WorkerReply> pool_reset(WorkerPool& pool, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> payloads;
  for (auto s : seeds) payloads.push_back(nlohmann::json{{"seed", s}}.dump());
  return pool.broadcast(MessageKind::Reset, payloads);
}

std::vector<WorkerReply> pool_step(WorkerPool& pool, const std::vector<JointAction>& actions) {
  std::vector<std::string> payloads;
  for (const auto& a : actions) payloads.push_back(actions_body(a).dump());
  return pool.broadcast(MessageKind::StepRequest, payloads);
}

}  // namespace umap
