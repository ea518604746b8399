#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umap/simulation.hpp"

namespace umap {

// Binary trace of one episode: enough to re-simulate it and check that the
// re-simulation reproduces every recorded digest. Records are
//   type u8 | length u32 BE | body
// with a header record, one record per decision step and an end record.
inline constexpr std::uint16_t kTraceVersion = 1;

enum class TraceRecordType : std::uint8_t { Header = 1, Step = 2, End = 3 };

struct TraceHeader {
  std::string task;
  std::uint64_t seed = 0;
  double decision_interval = 0.5;
  double frame_rate = 2560.0;
  double dilation = 1.0;
  std::uint16_t layout_version = 0;
  bool operator==(const TraceHeader&) const = default;

  TimeConfig time() const { return {decision_interval, frame_rate, dilation}; }
};

struct TraceStep {
  std::uint32_t step = 0;
  JointAction actions;
  std::uint64_t digest = 0;  // running digest after this step
  bool operator==(const TraceStep&) const = default;
};

struct TraceEnd {
  std::uint32_t steps = 0;
  std::uint64_t digest = 0;
  std::int32_t winner = kOutcomePending;
  bool operator==(const TraceEnd&) const = default;
};

struct Trace {
  TraceHeader header;
  std::uint64_t reset_digest = 0;
  std::vector<TraceStep> steps;
  std::optional<TraceEnd> end;
  bool operator==(const Trace&) const = default;
};

class TraceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_trace_header(const TraceHeader& header, std::uint64_t reset_digest);
std::vector<std::uint8_t> encode_trace_step(const TraceStep& step);
std::vector<std::uint8_t> encode_trace_end(const TraceEnd& end);
// Parses a concatenation of records.
Trace decode_trace(std::span<const std::uint8_t> bytes);

Trace read_trace(const std::filesystem::path& path);

class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const TraceHeader& header, std::uint64_t reset_digest);
  void step(const TraceStep& step);
  void end(const TraceEnd& end);
  const std::filesystem::path& path() const { return path_; }

 private:
  void put(const std::vector<std::uint8_t>& record);
  std::filesystem::path path_;
  std::ofstream out_;
};

// Directory for trace files from the UMAP_TRACE_DIR environment variable.
std::optional<std::filesystem::path> trace_dir_from_env();

struct ReplayResult {
  bool matches = false;
  std::size_t steps = 0;
  // First step whose digest differs; steps when all matched.
  std::size_t first_divergence = 0;
  std::uint64_t digest = 0;
};

// Re-simulates a trace (unpaced) and compares digests step by step.
ReplayResult replay(const Registry& registry, const Trace& trace);

// Records an episode while it is played.
Trace record_header(const Simulation& sim);

}  // namespace umap
