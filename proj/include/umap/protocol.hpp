#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace umap::protocol {

// 16-byte header, all multi-byte fields big-endian:
//   magic "UMAP" | version u8 | codec u8 | msg_type u16 | sequence u32 | payload_len u32
inline constexpr std::array<std::uint8_t, 4> kMagic{'U', 'M', 'A', 'P'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 31;
// Smaller payloads are never worth compressing.
inline constexpr std::size_t kCompressThreshold = 256;

enum class Codec : std::uint8_t { Raw = 0, Lz4 = 1 };

enum class MessageKind : std::uint16_t {
  Hello = 1,
  Configure = 2,
  Reset = 3,
  StepRequest = 4,
  StepResponse = 5,
  TraceChunk = 6,
  Shutdown = 7,
  ErrorReport = 8,
};
std::string_view to_string(MessageKind kind);
bool is_known(std::uint16_t raw_kind);
// Reply kind the server answers a request with.
MessageKind response_kind(MessageKind request);

enum class FrameErrc {
  BadMagic,
  UnknownVersion,
  UnknownCodec,
  UnknownMessage,
  Truncated,
  LengthMismatch,
  CorruptPayload,
  PayloadTooLarge,
  OutOfSequence,
};
std::string_view to_string(FrameErrc code);

class FrameError : public std::runtime_error {
 public:
  FrameError(FrameErrc code, const std::string& detail);
  FrameErrc code() const { return code_; }

 private:
  FrameErrc code_;
};

struct Frame {
  MessageKind kind = MessageKind::Hello;
  std::uint32_t sequence = 0;
  std::string payload;  // decoded (uncompressed) bytes
  bool operator==(const Frame&) const = default;
};

struct FrameHeader {
  std::uint8_t version = kVersion;
  Codec codec = Codec::Raw;
  MessageKind kind = MessageKind::Hello;
  std::uint32_t sequence = 0;
  std::uint32_t payload_len = 0;
};

// Codec::Lz4 is a request: it is applied only to payloads of at least
// kCompressThreshold bytes and only when the result is smaller.
std::vector<std::uint8_t> encode_frame(const Frame& frame, Codec codec = Codec::Lz4);
// Validates magic, version, codec and message kind.
FrameHeader decode_header(std::span<const std::uint8_t> bytes);
// Decompresses `body` (exactly header.payload_len bytes) per the header codec.
std::string decode_payload(const FrameHeader& header, std::span<const std::uint8_t> body);
// Decodes one complete frame; the buffer must hold exactly one frame.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// LZ4 block with a 4-byte big-endian original-length prefix.
std::vector<std::uint8_t> lz4_pack(std::string_view raw);
std::string lz4_unpack(std::span<const std::uint8_t> packed);

// Byte-order helpers shared with the trace format.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint16_t get_u16(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);

// ---- transports ----

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The peer went away (orderly close, reset, or process death).
class ConnectionClosed : public TransportError {
 public:
  using TransportError::TransportError;
};

// A reliable, ordered byte pipe.
class Stream {
 public:
  virtual ~Stream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> bytes) = 0;
  virtual void close() = 0;
};

class TcpStream final : public Stream {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  static std::unique_ptr<TcpStream> connect(const std::string& host, std::uint16_t port,
                                            std::chrono::milliseconds timeout = std::chrono::seconds(10));

  void write_all(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> bytes) override;
  void close() override;
  int fd() const { return fd_; }

 private:
  int fd_;
};

class TcpListener {
 public:
  // Port 0 picks an ephemeral port; see port().
  explicit TcpListener(std::uint16_t port = 0, const std::string& host = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<TcpStream> accept();
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Shared-memory duplex pipe between a parent and a forked child: two ring
// buffers in an anonymous shared mapping, guarded by process-shared robust
// mutexes. Create before fork; each process then takes one end.
class ShmemChannel : public std::enable_shared_from_this<ShmemChannel> {
 public:
  static std::shared_ptr<ShmemChannel> create(std::size_t ring_bytes = 1 << 20);
  ~ShmemChannel();
  ShmemChannel(const ShmemChannel&) = delete;
  ShmemChannel& operator=(const ShmemChannel&) = delete;

  // side 0 is the parent end, side 1 the child end. Records the calling
  // process as that side's owner for peer-liveness checks.
  std::unique_ptr<Stream> open(int side);
  // Lets the parent name the child end's process before the child opens it.
  void set_owner(int side, int pid);

 private:
  struct Shared;
  ShmemChannel(void* base, std::size_t bytes, std::size_t ring_bytes);
  void* base_;
  std::size_t bytes_;
  std::size_t ring_bytes_;
  friend class ShmemStream;
};

// Sequenced message exchange over a Stream. Outgoing sequence numbers start
// at 1 and increase by one; incoming ones must strictly increase.
class Connection {
 public:
  explicit Connection(std::unique_ptr<Stream> stream, Codec codec = Codec::Lz4);

  std::uint32_t send(MessageKind kind, std::string payload);
  std::uint32_t send_json(MessageKind kind, const nlohmann::json& body);
  // Sends a frame verbatim (sequence included); for tests and relays.
  void send_frame(const Frame& frame);
  Frame receive();
  void close();

  std::uint32_t last_sent() const { return send_seq_; }
  std::uint32_t last_received() const { return recv_seq_; }

 private:
  std::unique_ptr<Stream> stream_;
  Codec codec_;
  std::uint32_t send_seq_ = 0;
  std::uint32_t recv_seq_ = 0;
};

}  // namespace umap::protocol
