#include "umap/timeflow.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <thread>

namespace umap {

namespace {

std::int64_t whole_frames(double decision_interval, double frame_rate) {
  const double product = decision_interval * frame_rate;
  const double rounded = std::round(product);
  if (rounded < 1.0 || std::fabs(product - rounded) > 1e-9 * std::max(1.0, rounded)) {
    std::ostringstream msg;
    msg << "decision interval " << decision_interval << " s at " << frame_rate
        << " fps is not a whole number of frames (" << product << ")";
    throw TimeConfigError(msg.str());
  }
  return static_cast<std::int64_t>(rounded);
}

}  // namespace

TimeConfig::TimeConfig(double decision_interval, double baseline_frame_rate,
                       double dilation_factor)
    : decision_interval_(decision_interval),
      baseline_frame_rate_(baseline_frame_rate),
      dilation_factor_(dilation_factor),
      frames_per_decision_(0) {
  if (!(decision_interval > 0.0) || !std::isfinite(decision_interval))
    throw TimeConfigError("decision interval must be positive");
  if (!(baseline_frame_rate > 0.0) || !std::isfinite(baseline_frame_rate))
    throw TimeConfigError("baseline frame rate must be positive");
  if (!(dilation_factor > 0.0)) throw TimeConfigError("dilation factor must be positive");
  frames_per_decision_ = whole_frames(decision_interval, baseline_frame_rate);
}

TimeConfig TimeConfig::standard() { return TimeConfig(0.5, 2560.0, 64.0); }

TimeConfig TimeConfig::with_dilation(double dilation_factor) const {
  return TimeConfig(decision_interval_, baseline_frame_rate_, dilation_factor);
}

std::int64_t frames_per_decision(const TimeConfig& cfg) { return cfg.frames_per_decision(); }

double parse_dilation(const std::string& text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "max" || lower == "inf" || lower == "unpaced") return TimeConfig::kUnpaced;
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw TimeConfigError("bad time dilation '" + text + "'");
  }
  if (used != text.size() || !(value > 0.0))
    throw TimeConfigError("bad time dilation '" + text + "'");
  return value;
}

std::string format_dilation(double dilation) {
  if (dilation == TimeConfig::kUnpaced) return "max";
  std::ostringstream out;
  out << dilation;
  return out.str();
}

SimClock advance_frame(SimClock clock, std::int64_t frames_per_decision) {
  ++clock.frame_index;
  if (clock.frame_index % frames_per_decision == 0) ++clock.decision_index;
  return clock;
}

double real_time_budget(std::int64_t frames, const TimeConfig& cfg) {
  if (cfg.unpaced()) return 0.0;
  return static_cast<double>(frames) / (cfg.baseline_frame_rate() * cfg.dilation_factor());
}

PaceDecision pace(std::int64_t frames_since_anchor, const TimeConfig& cfg,
                  std::chrono::nanoseconds real_elapsed) {
  if (cfg.unpaced()) return {};
  const auto target = std::chrono::nanoseconds(
      static_cast<std::int64_t>(std::llround(real_time_budget(frames_since_anchor, cfg) * 1e9)));
  if (real_elapsed >= target) return {};
  return {false, target - real_elapsed};
}

Pacer::Pacer(TimeConfig cfg, ClockSource now, Sleeper sleep)
    : cfg_(cfg), now_(std::move(now)), sleep_(std::move(sleep)), anchor_(now_()) {
  if (!sleep_) sleep_ = [](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); };
}

void Pacer::anchor() {
  anchor_ = now_();
  frames_ = 0;
}

PaceDecision Pacer::after_frame() {
  ++frames_;
  if (cfg_.unpaced()) return {};
  const auto decision = pace(frames_, cfg_, now_() - anchor_);
  if (!decision.proceed) sleep_(decision.sleep);
  return decision;
}

}  // namespace umap
