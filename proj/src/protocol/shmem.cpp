#include <pthread.h>
#include <signal.h>
#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <string>

#include "umap/protocol.hpp"

namespace umap::protocol {

namespace {

// One direction of the pipe. Bytes written by side k travel in ring k.
struct Ring {
  pthread_mutex_t mu;
  pthread_cond_t readable;
  pthread_cond_t writable;
  std::uint64_t head;  // total bytes ever written
  std::uint64_t tail;  // total bytes ever read
  int closed;
};

bool process_gone(pid_t pid) {
  if (pid <= 0) return false;
  if (::kill(pid, 0) != 0 && errno == ESRCH) return true;
  // A zombie still answers kill(); its state letter gives it away.
  std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
  std::string line;
  if (!std::getline(stat, line)) return true;
  const auto close_paren = line.rfind(')');
  return close_paren != std::string::npos && close_paren + 2 < line.size() &&
         line[close_paren + 2] == 'Z';
}

timespec deadline_in(long ms) {
  timespec ts{};
  ::clock_gettime(CLOCK_MONOTONIC, &ts);
  ts.tv_nsec += ms * 1000000L;
  ts.tv_sec += ts.tv_nsec / 1000000000L;
  ts.tv_nsec %= 1000000000L;
  return ts;
}

}  // namespace

struct ShmemChannel::Shared {
  pid_t owner[2];
  Ring ring[2];
};

class ShmemStream final : public Stream {
 public:
  ShmemStream(std::shared_ptr<ShmemChannel> channel, int side)
      : channel_(std::move(channel)), side_(side) {}
  ~ShmemStream() override { close(); }

  void write_all(std::span<const std::uint8_t> bytes) override {
    Ring& r = shared()->ring[side_];
    std::uint8_t* data = ring_data(side_);
    const std::uint64_t cap = channel_->ring_bytes_;
    std::size_t done = 0;
    Lock lock(*this, r);
    while (done < bytes.size()) {
      if (r.closed) throw ConnectionClosed("shared-memory peer closed");
      const std::uint64_t space = cap - (r.head - r.tail);
      if (space == 0) {
        wait(r, r.writable);
        continue;
      }
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(space, bytes.size() - done));
      for (std::size_t i = 0; i < n; ++i) data[(r.head + i) % cap] = bytes[done + i];
      r.head += n;
      done += n;
      pthread_cond_broadcast(&r.readable);
    }
  }

  void read_exact(std::span<std::uint8_t> bytes) override {
    Ring& r = shared()->ring[1 - side_];
    const std::uint8_t* data = ring_data(1 - side_);
    const std::uint64_t cap = channel_->ring_bytes_;
    std::size_t done = 0;
    Lock lock(*this, r);
    while (done < bytes.size()) {
      const std::uint64_t avail = r.head - r.tail;
      if (avail == 0) {
        if (r.closed) throw ConnectionClosed("shared-memory peer closed");
        wait(r, r.readable);
        continue;
      }
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(avail, bytes.size() - done));
      for (std::size_t i = 0; i < n; ++i) bytes[done + i] = data[(r.tail + i) % cap];
      r.tail += n;
      done += n;
      pthread_cond_broadcast(&r.writable);
    }
  }

  void close() override {
    if (closed_) return;
    closed_ = true;
    for (Ring& r : shared()->ring) {
      Lock lock(*this, r);
      r.closed = 1;
      pthread_cond_broadcast(&r.readable);
      pthread_cond_broadcast(&r.writable);
    }
  }

 private:
  struct Lock {
    Lock(ShmemStream& s, Ring& r) : ring(r) {
      const int rc = pthread_mutex_lock(&r.mu);
      if (rc == EOWNERDEAD) {
        // The peer died inside a critical section; the pipe is unusable.
        r.closed = 1;
        pthread_mutex_consistent(&r.mu);
      } else if (rc != 0) {
        throw TransportError(std::string("shared-memory lock: ") + std::strerror(rc));
      }
      (void)s;
    }
    ~Lock() { pthread_mutex_unlock(&ring.mu); }
    Ring& ring;
  };

  // Timed wait so a peer that dies without closing is still noticed.
  void wait(Ring& r, pthread_cond_t& cv) {
    const timespec ts = deadline_in(50);
    const int rc = pthread_cond_timedwait(&cv, &r.mu, &ts);
    if (rc == EOWNERDEAD) {
      r.closed = 1;
      pthread_mutex_consistent(&r.mu);
    }
    if (rc == ETIMEDOUT && process_gone(shared()->owner[1 - side_])) r.closed = 1;
    if (r.closed && &cv == &r.writable) throw ConnectionClosed("shared-memory peer closed");
  }

  ShmemChannel::Shared* shared() const { return static_cast<ShmemChannel::Shared*>(channel_->base_); }
  std::uint8_t* ring_data(int k) const {
    return static_cast<std::uint8_t*>(channel_->base_) + sizeof(ShmemChannel::Shared) +
           static_cast<std::size_t>(k) * channel_->ring_bytes_;
  }

  std::shared_ptr<ShmemChannel> channel_;
  int side_;
  bool closed_ = false;
};

std::shared_ptr<ShmemChannel> ShmemChannel::create(std::size_t ring_bytes) {
  const std::size_t bytes = sizeof(Shared) + 2 * ring_bytes;
  void* base = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_ANONYMOUS, -1, 0);
  if (base == MAP_FAILED) throw TransportError(std::string("mmap: ") + std::strerror(errno));
  auto* s = new (base) Shared{};
  pthread_mutexattr_t ma;
  pthread_mutexattr_init(&ma);
  pthread_mutexattr_setpshared(&ma, PTHREAD_PROCESS_SHARED);
  pthread_mutexattr_setrobust(&ma, PTHREAD_MUTEX_ROBUST);
  pthread_condattr_t ca;
  pthread_condattr_init(&ca);
  pthread_condattr_setpshared(&ca, PTHREAD_PROCESS_SHARED);
  pthread_condattr_setclock(&ca, CLOCK_MONOTONIC);
  for (Ring& r : s->ring) {
    pthread_mutex_init(&r.mu, &ma);
    pthread_cond_init(&r.readable, &ca);
    pthread_cond_init(&r.writable, &ca);
  }
  pthread_mutexattr_destroy(&ma);
  pthread_condattr_destroy(&ca);
  return std::shared_ptr<ShmemChannel>(new ShmemChannel(base, bytes, ring_bytes));
}

ShmemChannel::ShmemChannel(void* base, std::size_t bytes, std::size_t ring_bytes)
    : base_(base), bytes_(bytes), ring_bytes_(ring_bytes) {}

ShmemChannel::~ShmemChannel() { ::munmap(base_, bytes_); }

void ShmemChannel::set_owner(int side, int pid) { static_cast<Shared*>(base_)->owner[side] = pid; }

std::unique_ptr<Stream> ShmemChannel::open(int side) {
  if (side != 0 && side != 1) throw std::invalid_argument("shared-memory side must be 0 or 1");
  set_owner(side, static_cast<int>(::getpid()));
  return std::make_unique<ShmemStream>(shared_from_this(), side);
}

}  // namespace umap::protocol
