#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace umap {

class TimeConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The three time knobs: simulation seconds per RL decision, frames per
// simulation second, and the simulation/real time ratio. A dilation of +inf
// means unpaced stepping (non-render training mode).
class TimeConfig {
 public:
  static constexpr double kUnpaced = std::numeric_limits<double>::infinity();

  // Throws TimeConfigError unless all three are positive and
  // decision_interval * baseline_frame_rate is a whole number of frames.
  TimeConfig(double decision_interval, double baseline_frame_rate, double dilation_factor = 1.0);

  // 1/2560 s frames, 1/2 s decisions, dilation 64.
  static TimeConfig standard();

  double decision_interval() const { return decision_interval_; }
  double baseline_frame_rate() const { return baseline_frame_rate_; }
  double dilation_factor() const { return dilation_factor_; }
  bool unpaced() const { return dilation_factor_ == kUnpaced; }
  std::int64_t frames_per_decision() const { return frames_per_decision_; }
  double frame_seconds() const { return 1.0 / baseline_frame_rate_; }

  TimeConfig with_dilation(double dilation_factor) const;

  bool operator==(const TimeConfig&) const = default;

 private:
  double decision_interval_;
  double baseline_frame_rate_;
  double dilation_factor_;
  std::int64_t frames_per_decision_;
};

std::int64_t frames_per_decision(const TimeConfig& cfg);

// Parses "max"/"inf"/"unpaced" as the unpaced sentinel, otherwise a positive float.
double parse_dilation(const std::string& text);
std::string format_dilation(double dilation);

// Integer frame-counted simulation clock. Simulation time is
// frame_index / baseline_frame_rate, never accumulated in floating point.
struct SimClock {
  std::int64_t frame_index = 0;
  std::int64_t decision_index = 0;

  double sim_seconds(const TimeConfig& cfg) const {
    return static_cast<double>(frame_index) / cfg.baseline_frame_rate();
  }
  bool at_decision_boundary(std::int64_t frames_per_decision) const {
    return frame_index % frames_per_decision == 0;
  }
  bool operator==(const SimClock&) const = default;
};

SimClock advance_frame(SimClock clock, std::int64_t frames_per_decision);

// Wall-clock seconds the pacer targets for `frames` frames.
double real_time_budget(std::int64_t frames, const TimeConfig& cfg);

struct PaceDecision {
  bool proceed = true;
  std::chrono::nanoseconds sleep{0};
};

// Pure pacing rule: given how many frames have been simulated since the
// anchor and how much wall time has elapsed, either sleep back onto the
// dilation schedule or proceed at once when behind it.
PaceDecision pace(std::int64_t frames_since_anchor, const TimeConfig& cfg,
                  std::chrono::nanoseconds real_elapsed);

// Stateful pacer re-synchronizing once per frame against a monotonic clock.
// The anchor is reset at the start of every decision step, so time the world
// spends frozen waiting for actions never counts against the schedule.
class Pacer {
 public:
  using Clock = std::chrono::steady_clock;
  using ClockSource = std::function<Clock::time_point()>;
  using Sleeper = std::function<void(std::chrono::nanoseconds)>;

  explicit Pacer(TimeConfig cfg, ClockSource now = &Clock::now, Sleeper sleep = {});

  void anchor();
  // Call after each simulated frame. Returns the decision taken (and sleeps).
  PaceDecision after_frame();

  const TimeConfig& config() const { return cfg_; }
  std::int64_t frames_since_anchor() const { return frames_; }

 private:
  TimeConfig cfg_;
  ClockSource now_;
  Sleeper sleep_;
  Clock::time_point anchor_;
  std::int64_t frames_ = 0;
};

}  // namespace umap
