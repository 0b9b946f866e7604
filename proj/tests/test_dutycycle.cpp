#include "contextfed/dutycycle.hpp"
#include "contextfed/error.hpp"
#include "contextfed/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace contextfed;

namespace {

DeviceTimeline quiet(int minutes) { return DeviceTimeline(static_cast<std::size_t>(minutes)); }

DeviceTimeline with_conversation(int minutes, int from, int to) {
  auto t = quiet(minutes);
  for (int m = from; m <= to; ++m) t[static_cast<std::size_t>(m)].conversation = true;
  return t;
}

}  // namespace

TEST_CASE("a quiet hour probes 15 minutes") {
  const auto t = quiet(60);
  const auto trace = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
  CHECK(trace.probe_minutes == 15);
  CHECK(trace.recorded_minutes.size() == 15);
  CHECK(trace.buffered_segments == 0);
  for (std::size_t i = 0; i < trace.recorded_minutes.size(); ++i) CHECK(trace.recorded_minutes[i] == 4 * static_cast<int>(i));
}

TEST_CASE("null detectors record ceil(len/4) minutes") {
  for (int len = 1; len < 40; ++len) {
    const auto t = quiet(len);
    const auto trace = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
    CHECK(static_cast<int>(trace.recorded_minutes.size()) == (len + 3) / 4);
  }
}

TEST_CASE("a conversation is captured from the first probe that hears it") {
  auto t = with_conversation(40, 10, 19);
  t[30].idle = t[30].charging = true;
  const auto d = dutycycle::oracle_detectors(t, "en");
  const auto trace = dutycycle::simulate(t, d, "en");
  CHECK(trace.buffered_segments == 1);
  REQUIRE(trace.processed.size() == 1);
  CHECK(trace.processed[0].segment == Segment{12, 19});
  CHECK(trace.processed[0].minute == 30);
  CHECK(trace.processed[0].accepted);
  REQUIRE(trace.accepted_tokens.size() == 1);
  CHECK(trace.accepted_tokens[0].front() == "m12");
  CHECK(trace.accepted_tokens[0].size() == 8);
  // Probes at 0, 4, 8, 12 then extension minutes 13..20, then probes from 24.
  CHECK(trace.extension_minutes == 8);
  CHECK(static_cast<int>(trace.recorded_minutes.size()) == trace.probe_minutes + trace.extension_minutes);
}

TEST_CASE("vad always on records continuously after the first probe") {
  DeviceTimeline t(20, MinuteFlags{true, false, false});
  const auto trace = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
  CHECK(trace.probe_minutes == 1);
  CHECK(trace.recorded_minutes.size() == 20);
  CHECK(trace.pending == std::vector<Segment>{Segment{0, 19}});
}

TEST_CASE("step transitions") {
  const auto t = with_conversation(8, 0, 1);
  const auto d = dutycycle::oracle_detectors(t, "en");
  DutyState s;
  auto a = dutycycle::step(s, 0, t[0], d);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == ActionKind::probe);
  CHECK(s.phase == DutyPhase::Recording);
  a = dutycycle::step(s, 1, t[1], d);
  CHECK(a[0].kind == ActionKind::record);
  a = dutycycle::step(s, 2, t[2], d);
  REQUIRE(a.size() == 2);
  CHECK(a[1].kind == ActionKind::buffer);
  CHECK(a[1].segment == Segment{0, 1});
  CHECK(s.phase == DutyPhase::Sleeping);
  CHECK(dutycycle::step(s, 3, t[3], d).empty());
  CHECK(dutycycle::step(s, 4, t[4], d)[0].kind == ActionKind::probe);
}

TEST_CASE("process_buffer stages") {
  const auto t = with_conversation(30, 0, 29);
  auto d = dutycycle::oracle_detectors(t, "en");
  const std::vector<Segment> segs = {{0, 3}, {10, 12}, {20, 21}};
  auto all = dutycycle::process_buffer(segs, d, "en");
  for (const auto& r : all) CHECK(r.has_value());
  CHECK(*all[1] == TokenList{"m10", "m11", "m12"});

  d.language_id = [](const Segment& s) { return s.start == 10 ? std::string("de") : std::string("en"); };
  auto lang = dutycycle::process_buffer(segs, d, "en");
  CHECK(lang[0].has_value());
  CHECK(!lang[1].has_value());

  d = dutycycle::oracle_detectors(t, "en");
  d.voice_check = [](const Segment& s) { return s.start != 20; };
  auto voice = dutycycle::process_buffer(segs, d, "en");
  CHECK(voice[0].has_value());
  CHECK(!voice[2].has_value());

  d = dutycycle::oracle_detectors(t, "en");
  d.voice_filter = [](const Segment&) { return Segment{5, 4}; };  // filter removes everything
  for (const auto& r : dutycycle::process_buffer(segs, d, "en")) CHECK(!r.has_value());
}

TEST_CASE("charging gates processing") {
  auto t = with_conversation(60, 2, 9);
  const auto never = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
  CHECK(never.processed.empty());
  CHECK(never.accepted_tokens.empty());
  CHECK(never.pending.size() == 1);

  t[30].charging = true;  // charging but in use: still gated
  CHECK(dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en").processed.empty());
  t[30].idle = true;
  const auto at30 = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
  REQUIRE(at30.processed.size() == 1);
  CHECK(at30.processed[0].minute == 30);
}

TEST_CASE("random timelines never process before an idle and charging minute") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    DeviceTimeline t(10 + rng.below(200));
    for (auto& f : t) {
      f.conversation = rng.bernoulli(0.3);
      f.idle = rng.bernoulli(0.3);
      f.charging = rng.bernoulli(0.3);
    }
    const auto trace = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
    CHECK(trace.recorded_minutes.size() <= t.size());
    CHECK(static_cast<int>(trace.recorded_minutes.size()) == trace.probe_minutes + trace.extension_minutes);
    for (const auto& p : trace.processed) {
      const auto& f = t[static_cast<std::size_t>(p.minute)];
      CHECK((f.idle && f.charging));
      CHECK(p.segment.end < p.minute);
    }
    CHECK(trace.processed.size() + trace.pending.size() == static_cast<std::size_t>(trace.buffered_segments));
    const auto again = dutycycle::simulate(t, dutycycle::oracle_detectors(t, "en"), "en");
    CHECK(dutycycle::trace_json(again) == dutycycle::trace_json(trace));
  }
}

TEST_CASE("timeline csv and trace json") {
  const auto t = dutycycle::parse_timeline_csv("minute,conversation,idle,charging\n0,0,0,0\n1,1,0,0\n2,0,1,1\n");
  REQUIRE(t.size() == 3);
  CHECK(t[1].conversation);
  CHECK((t[2].idle && t[2].charging));
  CHECK_THROWS_WITH_AS(dutycycle::parse_timeline_csv("0,0,0\n"), doctest::Contains("line 1"), Error);
  CHECK_THROWS_WITH_AS(dutycycle::parse_timeline_csv("0,0,0,0\n2,0,0,0\n"), doctest::Contains("line 2"), Error);
  CHECK_THROWS_AS(dutycycle::parse_timeline_csv("0,0,2,0\n"), Error);

  const auto trace = dutycycle::simulate(quiet(8), dutycycle::oracle_detectors(quiet(8), "en"), "en");
  const auto j = nlohmann::json::parse(dutycycle::trace_json(trace));
  CHECK(j["probe_minutes"] == 2);
  CHECK(j["processed"].empty());
}
