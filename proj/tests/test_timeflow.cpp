#include <doctest.h>

#include <vector>

#include "umap/timeflow.hpp"

using namespace umap;
using namespace std::chrono_literals;

TEST_CASE("frames per decision is interval times frame rate") {
  CHECK(frames_per_decision(TimeConfig(0.5, 30)) == 15);
  CHECK(frames_per_decision(TimeConfig(0.5, 2560)) == 1280);
  CHECK(frames_per_decision(TimeConfig(1.0, 1)) == 1);
  CHECK(TimeConfig::standard().frames_per_decision() == 1280);
  CHECK(TimeConfig::standard().dilation_factor() == 64.0);
}

TEST_CASE("invalid time configs are rejected") {
  CHECK_THROWS_AS(TimeConfig(0.5, 25), TimeConfigError);  // 12.5 frames
  CHECK_THROWS_AS(TimeConfig(0.0, 30), TimeConfigError);
  CHECK_THROWS_AS(TimeConfig(-1.0, 30), TimeConfigError);
  CHECK_THROWS_AS(TimeConfig(0.5, 0), TimeConfigError);
  CHECK_THROWS_AS(TimeConfig(0.5, 30, 0.0), TimeConfigError);
  CHECK_THROWS_AS(TimeConfig(0.5, 30, -2.0), TimeConfigError);
  CHECK_NOTHROW(TimeConfig(0.5, 30, TimeConfig::kUnpaced));
  CHECK(TimeConfig(0.5, 30, TimeConfig::kUnpaced).unpaced());
}

TEST_CASE("advance frame counts decisions at boundaries") {
  SimClock c;
  c = advance_frame(c, 15);
  CHECK(c.frame_index == 1);
  CHECK(c.decision_index == 0);

  SimClock d{14, 0};
  d = advance_frame(d, 15);
  CHECK(d.frame_index == 15);
  CHECK(d.decision_index == 1);
  CHECK(d.at_decision_boundary(15));

  SimClock e{1279, 0};
  e = advance_frame(e, 1280);
  CHECK(e.frame_index == 1280);
  CHECK(e.decision_index == 1);
}

TEST_CASE("frame counting has no drift over ten million frames") {
  const TimeConfig cfg(0.5, 2560);
  SimClock c;
  const std::int64_t n = 10'000'000;
  for (std::int64_t i = 0; i < n; ++i) c = advance_frame(c, cfg.frames_per_decision());
  CHECK(c.frame_index == n);
  CHECK(c.decision_index == n / 1280);
  CHECK(c.sim_seconds(cfg) == static_cast<double>(n) / 2560.0);
}

TEST_CASE("real time budget") {
  CHECK(real_time_budget(30, TimeConfig(0.5, 30, 1.0)) == doctest::Approx(1.0));
  CHECK(real_time_budget(30, TimeConfig(0.5, 30, 2.0)) == doctest::Approx(0.5));
  CHECK(real_time_budget(30, TimeConfig(0.5, 30, 0.5)) == doctest::Approx(2.0));
  CHECK(real_time_budget(30, TimeConfig(0.5, 30, TimeConfig::kUnpaced)) == 0.0);
  const TimeConfig cfg(0.5, 2560, 3.0);
  for (std::int64_t k = 1; k <= 7; ++k)
    CHECK(real_time_budget(k * 1280, cfg) == doctest::Approx(k * real_time_budget(1280, cfg)).epsilon(1e-12));
}

TEST_CASE("pace sleeps when ahead and proceeds when behind") {
  const TimeConfig cfg(0.5, 100, 1.0);  // one frame = 10 ms of wall time
  const PaceDecision ahead = pace(1, cfg, 0ms);
  CHECK_FALSE(ahead.proceed);
  CHECK(ahead.sleep == 10ms);

  const PaceDecision behind = pace(1, cfg, 50ms);
  CHECK(behind.proceed);
  CHECK(behind.sleep == 0ns);

  const TimeConfig fast(0.5, 100, 1e12);
  for (int f = 1; f < 100; ++f) CHECK(pace(f, fast, 1us).proceed);
  CHECK(pace(1000, TimeConfig(0.5, 100, TimeConfig::kUnpaced), 0ns).proceed);
}

TEST_CASE("pacer follows the schedule against an injected clock") {
  Pacer::Clock::time_point now{};
  std::vector<std::chrono::nanoseconds> sleeps;
  Pacer pacer(
      TimeConfig(0.5, 100, 2.0), [&] { return now; },
      [&](std::chrono::nanoseconds d) {
        sleeps.push_back(d);
        now += d;
      });
  pacer.anchor();
  for (int f = 0; f < 10; ++f) pacer.after_frame();
  // Dilation 2: each 10 ms frame is due 5 ms of wall time.
  REQUIRE(sleeps.size() == 10);
  for (auto s : sleeps) CHECK(s == 5ms);
  CHECK(now.time_since_epoch() == 50ms);

  // A frozen world (slow policy) does not count against the next step.
  now += 1s;
  pacer.anchor();
  sleeps.clear();
  pacer.after_frame();
  REQUIRE(sleeps.size() == 1);
  CHECK(sleeps[0] == 5ms);

  // Running behind never sleeps.
  sleeps.clear();
  pacer.anchor();
  now += 1s;
  CHECK(pacer.after_frame().proceed);
  CHECK(sleeps.empty());
}

TEST_CASE("dilation parsing") {
  CHECK(parse_dilation("max") == TimeConfig::kUnpaced);
  CHECK(parse_dilation("inf") == TimeConfig::kUnpaced);
  CHECK(parse_dilation("4") == 4.0);
  CHECK(parse_dilation("0.25") == 0.25);
  CHECK_THROWS(parse_dilation("0"));
  CHECK_THROWS(parse_dilation("-1"));
  CHECK_THROWS(parse_dilation("fast"));
  CHECK(format_dilation(TimeConfig::kUnpaced) == "max");
  CHECK(parse_dilation(format_dilation(8.0)) == 8.0);
}
