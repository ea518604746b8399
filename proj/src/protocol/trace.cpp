#include "umap/trace.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <iterator>

#include "umap/protocol.hpp"

namespace umap {

namespace {

using protocol::get_u16;
using protocol::get_u32;
using protocol::get_u64;
using protocol::put_u16;
using protocol::put_u32;
using protocol::put_u64;

constexpr std::uint8_t kTraceMagic[4] = {'U', 'M', 'T', 'R'};

std::vector<std::uint8_t> wrap(TraceRecordType type, const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + body.size());
  out.push_back(static_cast<std::uint8_t>(type));
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

// Bounds-checked cursor over one record body.
struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t at = 0;

  const std::uint8_t* take(std::size_t n) {
    if (bytes.size() - at < n) throw TraceFormatError("trace record is truncated");
    const std::uint8_t* p = bytes.data() + at;
    at += n;
    return p;
  }
  std::uint16_t u16() { return get_u16(take(2)); }
  std::uint32_t u32() { return get_u32(take(4)); }
  std::uint64_t u64() { return get_u64(take(8)); }
  double f64() { return get_f64(take(8)); }
};

}  // namespace

std::vector<std::uint8_t> encode_trace_header(const TraceHeader& header, std::uint64_t reset_digest) {
  std::vector<std::uint8_t> body(std::begin(kTraceMagic), std::end(kTraceMagic));
  put_u16(body, kTraceVersion);
  put_u16(body, header.layout_version);
  put_u64(body, header.seed);
  put_f64(body, header.decision_interval);
  put_f64(body, header.frame_rate);
  put_f64(body, header.dilation);
  put_u64(body, reset_digest);
  put_u16(body, static_cast<std::uint16_t>(header.task.size()));
  body.insert(body.end(), header.task.begin(), header.task.end());
  return wrap(TraceRecordType::Header, body);
}

std::vector<std::uint8_t> encode_trace_step(const TraceStep& step) {
  std::vector<std::uint8_t> body;
  put_u32(body, step.step);
  put_u32(body, static_cast<std::uint32_t>(step.actions.size()));
  for (const auto& [id, action] : step.actions) {
    put_u32(body, static_cast<std::uint32_t>(id));
    put_u32(body, static_cast<std::uint32_t>(action));
  }
  put_u64(body, step.digest);
  return wrap(TraceRecordType::Step, body);
}

std::vector<std::uint8_t> encode_trace_end(const TraceEnd& end) {
  std::vector<std::uint8_t> body;
  put_u32(body, end.steps);
  put_u64(body, end.digest);
  put_u32(body, static_cast<std::uint32_t>(end.winner));
  return wrap(TraceRecordType::End, body);
}

Trace decode_trace(std::span<const std::uint8_t> bytes) {
  Trace trace;
  bool have_header = false;
  std::size_t at = 0;
  while (at < bytes.size()) {
    if (bytes.size() - at < 5) throw TraceFormatError("trace record header is truncated");
    const auto type = bytes[at];
    const std::uint32_t len = get_u32(bytes.data() + at + 1);
    at += 5;
    if (bytes.size() - at < len) throw TraceFormatError("trace record body is truncated");
    Reader r{bytes.subspan(at, len)};
    at += len;

    switch (static_cast<TraceRecordType>(type)) {
      case TraceRecordType::Header: {
        const std::uint8_t* magic = r.take(4);
        if (!std::equal(magic, magic + 4, kTraceMagic)) throw TraceFormatError("not a trace (bad magic)");
        if (r.u16() != kTraceVersion) throw TraceFormatError("unsupported trace version");
        trace.header.layout_version = r.u16();
        trace.header.seed = r.u64();
        trace.header.decision_interval = r.f64();
        trace.header.frame_rate = r.f64();
        trace.header.dilation = r.f64();
        trace.reset_digest = r.u64();
        const std::uint16_t n = r.u16();
        const std::uint8_t* name = r.take(n);
        trace.header.task.assign(name, name + n);
        have_header = true;
        break;
      }
      case TraceRecordType::Step: {
        TraceStep s;
        s.step = r.u32();
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
          const auto id = static_cast<std::int32_t>(r.u32());
          s.actions[id] = static_cast<std::int32_t>(r.u32());
        }
        s.digest = r.u64();
        trace.steps.push_back(std::move(s));
        break;
      }
      case TraceRecordType::End: {
        TraceEnd e;
        e.steps = r.u32();
        e.digest = r.u64();
        e.winner = static_cast<std::int32_t>(r.u32());
        trace.end = e;
        break;
      }
      default:
        throw TraceFormatError("unknown trace record type " + std::to_string(type));
    }
    if (r.at != r.bytes.size()) throw TraceFormatError("trace record has trailing bytes");
  }
  if (!have_header) throw TraceFormatError("trace has no header record");
  return trace;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_trace(bytes);
}

TraceWriter::TraceWriter(const std::filesystem::path& path, const TraceHeader& header,
                         std::uint64_t reset_digest)
    : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot write trace " + path.string());
  put(encode_trace_header(header, reset_digest));
}

void TraceWriter::step(const TraceStep& step) { put(encode_trace_step(step)); }

void TraceWriter::end(const TraceEnd& end) { put(encode_trace_end(end)); }

void TraceWriter::put(const std::vector<std::uint8_t>& record) {
  out_.write(reinterpret_cast<const char*>(record.data()), static_cast<std::streamsize>(record.size()));
  out_.flush();
}

std::optional<std::filesystem::path> trace_dir_from_env() {
  const char* dir = std::getenv("UMAP_TRACE_DIR");
  if (!dir || !*dir) return std::nullopt;
  return std::filesystem::path(dir);
}

Trace record_header(const Simulation& sim) {
  Trace t;
  t.header.task = sim.task().name;
  t.header.seed = sim.seed();
  t.header.decision_interval = sim.time().decision_interval();
  t.header.frame_rate = sim.time().baseline_frame_rate();
  t.header.dilation = sim.time().dilation_factor();
  t.header.layout_version = static_cast<std::uint16_t>(kFeatureLayoutVersion);
  t.reset_digest = sim.digest();
  return t;
}

ReplayResult replay(const Registry& registry, const Trace& trace) {
  Simulation sim(registry, trace.header.task, trace.header.time());
  sim.set_pacing(false);
  sim.reset(trace.header.seed);
  ReplayResult r;
  r.first_divergence = trace.steps.size();
  bool ok = sim.digest() == trace.reset_digest;
  if (!ok) r.first_divergence = 0;
  for (std::size_t i = 0; ok && i < trace.steps.size(); ++i) {
    sim.step(trace.steps[i].actions);
    ++r.steps;
    if (sim.digest() != trace.steps[i].digest) {
      ok = false;
      r.first_divergence = i;
    }
  }
  if (ok && trace.end) ok = trace.end->digest == sim.digest() && trace.end->winner == sim.state().winner;
  r.matches = ok;
  r.digest = sim.digest();
  return r;
}

}  // namespace umap
