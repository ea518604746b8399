#include <algorithm>
#include <cstring>

#include <lz4.h>

#include "umap/protocol.hpp"

namespace umap::protocol {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Hello: return "Hello";
    case MessageKind::Configure: return "Configure";
    case MessageKind::Reset: return "Reset";
    case MessageKind::StepRequest: return "StepRequest";
    case MessageKind::StepResponse: return "StepResponse";
    case MessageKind::TraceChunk: return "TraceChunk";
    case MessageKind::Shutdown: return "Shutdown";
    case MessageKind::ErrorReport: return "ErrorReport";
  }
  return "?";
}

bool is_known(std::uint16_t raw_kind) { return raw_kind >= 1 && raw_kind <= 8; }

MessageKind response_kind(MessageKind request) {
  switch (request) {
    case MessageKind::Hello:
    case MessageKind::Configure: return MessageKind::Hello;
    case MessageKind::Reset:
    case MessageKind::StepRequest: return MessageKind::StepResponse;
    case MessageKind::Shutdown: return MessageKind::Shutdown;
    default: return MessageKind::ErrorReport;
  }
}

std::string_view to_string(FrameErrc code) {
  switch (code) {
    case FrameErrc::BadMagic: return "BadMagic";
    case FrameErrc::UnknownVersion: return "UnknownVersion";
    case FrameErrc::UnknownCodec: return "UnknownCodec";
    case FrameErrc::UnknownMessage: return "UnknownMessage";
    case FrameErrc::Truncated: return "Truncated";
    case FrameErrc::LengthMismatch: return "LengthMismatch";
    case FrameErrc::CorruptPayload: return "CorruptPayload";
    case FrameErrc::PayloadTooLarge: return "PayloadTooLarge";
    case FrameErrc::OutOfSequence: return "OutOfSequence";
  }
  return "?";
}

FrameError::FrameError(FrameErrc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

std::uint64_t get_u64(const std::uint8_t* p) {
  return (std::uint64_t{get_u32(p)} << 32) | get_u32(p + 4);
}

std::vector<std::uint8_t> lz4_pack(std::string_view raw) {
  if (raw.size() > LZ4_MAX_INPUT_SIZE)
    throw FrameError(FrameErrc::PayloadTooLarge, "payload exceeds the LZ4 input limit");
  const int src = static_cast<int>(raw.size());
  std::vector<std::uint8_t> out;
  out.reserve(4 + static_cast<std::size_t>(LZ4_compressBound(src)));
  put_u32(out, static_cast<std::uint32_t>(raw.size()));
  out.resize(4 + static_cast<std::size_t>(LZ4_compressBound(src)));
  const int n = LZ4_compress_default(raw.data(), reinterpret_cast<char*>(out.data() + 4), src,
                                     LZ4_compressBound(src));
  if (n <= 0 && src > 0) throw std::runtime_error("LZ4 compression failed");
  out.resize(4 + static_cast<std::size_t>(n));
  return out;
}

std::string lz4_unpack(std::span<const std::uint8_t> packed) {
  if (packed.size() < 4) throw FrameError(FrameErrc::CorruptPayload, "LZ4 payload lacks its length prefix");
  const std::uint32_t original = get_u32(packed.data());
  if (original > LZ4_MAX_INPUT_SIZE)
    throw FrameError(FrameErrc::CorruptPayload, "LZ4 original length out of range");
  std::string out(original, '\0');
  const int n = LZ4_decompress_safe(reinterpret_cast<const char*>(packed.data() + 4), out.data(),
                                    static_cast<int>(packed.size() - 4), static_cast<int>(original));
  if (n < 0 || static_cast<std::uint32_t>(n) != original)
    throw FrameError(FrameErrc::CorruptPayload, "LZ4 block does not decode to its declared length");
  return out;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame, Codec codec) {
  if (frame.payload.size() > kMaxPayload)
    throw FrameError(FrameErrc::PayloadTooLarge, "payload of " + std::to_string(frame.payload.size()) +
                                                     " bytes exceeds the 2^31 limit");
  std::vector<std::uint8_t> body;
  Codec used = Codec::Raw;
  if (codec == Codec::Lz4 && frame.payload.size() >= kCompressThreshold &&
      frame.payload.size() <= LZ4_MAX_INPUT_SIZE) {
    body = lz4_pack(frame.payload);
    if (body.size() < frame.payload.size()) {
      used = Codec::Lz4;
    } else {
      body.clear();
    }
  }
  const std::size_t len = used == Codec::Raw ? frame.payload.size() : body.size();

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + len);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(used));
  put_u16(out, static_cast<std::uint16_t>(frame.kind));
  put_u32(out, frame.sequence);
  put_u32(out, static_cast<std::uint32_t>(len));
  if (used == Codec::Raw) {
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  } else {
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize)
    throw FrameError(FrameErrc::Truncated, "header needs 16 bytes, got " + std::to_string(bytes.size()));
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FrameError(FrameErrc::BadMagic, "frame does not start with UMAP");
  FrameHeader h;
  h.version = bytes[4];
  if (h.version != kVersion)
    throw FrameError(FrameErrc::UnknownVersion, "version " + std::to_string(h.version));
  if (bytes[5] > 1) throw FrameError(FrameErrc::UnknownCodec, "codec " + std::to_string(bytes[5]));
  h.codec = static_cast<Codec>(bytes[5]);
  const std::uint16_t kind = get_u16(bytes.data() + 6);
  if (!is_known(kind)) throw FrameError(FrameErrc::UnknownMessage, "message type " + std::to_string(kind));
  h.kind = static_cast<MessageKind>(kind);
  h.sequence = get_u32(bytes.data() + 8);
  h.payload_len = get_u32(bytes.data() + 12);
  if (h.payload_len > kMaxPayload)
    throw FrameError(FrameErrc::PayloadTooLarge, "declared payload of " + std::to_string(h.payload_len));
  return h;
}

std::string decode_payload(const FrameHeader& header, std::span<const std::uint8_t> body) {
  if (body.size() != header.payload_len)
    throw FrameError(FrameErrc::LengthMismatch, "payload has " + std::to_string(body.size()) +
                                                    " bytes, header says " +
                                                    std::to_string(header.payload_len));
  if (header.codec == Codec::Raw) return {body.begin(), body.end()};
  return lz4_unpack(body);
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_header(bytes);
  const std::size_t available = bytes.size() - kHeaderSize;
  if (available < h.payload_len)
    throw FrameError(FrameErrc::Truncated, "payload_len " + std::to_string(h.payload_len) + ", " +
                                               std::to_string(available) + " bytes present");
  if (available > h.payload_len)
    throw FrameError(FrameErrc::LengthMismatch, std::to_string(available - h.payload_len) +
                                                    " trailing bytes after the payload");
  return {h.kind, h.sequence, decode_payload(h, bytes.subspan(kHeaderSize))};
}

Connection::Connection(std::unique_ptr<Stream> stream, Codec codec)
    : stream_(std::move(stream)), codec_(codec) {}

std::uint32_t Connection::send(MessageKind kind, std::string payload) {
  Frame f{kind, send_seq_ + 1, std::move(payload)};
  send_frame(f);
  return f.sequence;
}

std::uint32_t Connection::send_json(MessageKind kind, const nlohmann::json& body) {
  return send(kind, body.dump());
}

void Connection::send_frame(const Frame& frame) {
  const auto bytes = encode_frame(frame, codec_);
  stream_->write_all(bytes);
  send_seq_ = std::max(send_seq_, frame.sequence);
}

Frame Connection::receive() {
  std::array<std::uint8_t, kHeaderSize> head{};
  stream_->read_exact(head);
  const FrameHeader h = decode_header(head);
  std::vector<std::uint8_t> body(h.payload_len);
  stream_->read_exact(body);
  Frame f{h.kind, h.sequence, decode_payload(h, body)};
  if (f.sequence <= recv_seq_)
    throw FrameError(FrameErrc::OutOfSequence, "sequence " + std::to_string(f.sequence) +
                                                   " after " + std::to_string(recv_seq_));
  recv_seq_ = f.sequence;
  return f;
}

void Connection::close() {
  if (stream_) stream_->close();
}

}  // namespace umap::protocol
