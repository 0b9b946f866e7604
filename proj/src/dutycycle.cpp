#include "contextfed/dutycycle.hpp"

#include <sstream>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"

namespace contextfed {

std::string_view to_string(DutyPhase p) {
  switch (p) {
    case DutyPhase::Sleeping: return "Sleeping";
    case DutyPhase::Probing: return "Probing";
    case DutyPhase::Recording: return "Recording";
  }
  return "?";
}

namespace dutycycle {

Detectors oracle_detectors(const DeviceTimeline& timeline, const std::string& language) {
  Detectors d;
  d.vad = [&timeline](int minute) {
    return minute >= 0 && static_cast<std::size_t>(minute) < timeline.size() &&
           timeline[static_cast<std::size_t>(minute)].conversation;
  };
  d.voice_filter = [](const Segment& s) { return s; };
  d.language_id = [language](const Segment&) { return language; };
  d.asr = [](const Segment& s) {
    TokenList out;
    for (int m = s.start; m <= s.end; ++m) out.push_back("m" + std::to_string(m));
    return out;
  };
  return d;
}

namespace {
void close_segment(DutyState& state, int minute, std::vector<Action>& actions) {
  const Segment seg{*state.open_start, state.last_voiced};
  state.buffered_segments.push_back(seg);
  actions.push_back({ActionKind::buffer, minute, seg});
  state.open_start.reset();
  state.phase = DutyPhase::Sleeping;
}
}  // namespace

std::vector<Action> step(DutyState& state, int minute, const MinuteFlags& /*flags*/, const Detectors& d) {
  std::vector<Action> actions;
  if (state.phase == DutyPhase::Sleeping && state.minute_in_cycle == 0) state.phase = DutyPhase::Probing;

  if (state.phase == DutyPhase::Probing) {
    actions.push_back({ActionKind::probe, minute, {}});
    if (d.vad(minute)) {
      state.phase = DutyPhase::Recording;
      state.open_start = minute;
      state.last_voiced = minute;
    } else {
      state.phase = DutyPhase::Sleeping;
    }
  } else if (state.phase == DutyPhase::Recording) {
    actions.push_back({ActionKind::record, minute, {}});
    if (d.vad(minute)) {
      state.last_voiced = minute;
    } else {
      close_segment(state, minute, actions);
    }
  }
  state.minute_in_cycle = (state.minute_in_cycle + 1) % kCycleMinutes;
  return actions;
}

std::vector<Action> finish(DutyState& state) {
  std::vector<Action> actions;
  if (state.phase == DutyPhase::Recording && state.open_start) close_segment(state, state.last_voiced, actions);
  return actions;
}

std::vector<std::optional<TokenList>> process_buffer(const std::vector<Segment>& segments, const Detectors& d,
                                                     const std::string& user_language) {
  std::vector<std::optional<TokenList>> out;
  out.reserve(segments.size());
  for (const Segment& raw : segments) {
    const Segment seg = d.voice_filter ? d.voice_filter(raw) : raw;
    bool voiced = false;
    if (!seg.empty()) {
      if (d.voice_check) {
        voiced = d.voice_check(seg);
      } else {
        for (int m = seg.start; m <= seg.end && !voiced; ++m) voiced = d.vad(m);
      }
    }
    if (!voiced || d.language_id(seg) != user_language) {
      out.emplace_back(std::nullopt);
      continue;
    }
    out.emplace_back(d.asr(seg));
  }
  return out;
}

CollectionTrace simulate(const DeviceTimeline& timeline, const Detectors& d, const std::string& user_language) {
  CollectionTrace trace;
  DutyState state;
  auto absorb = [&](const std::vector<Action>& actions) {
    for (const auto& a : actions) {
      if (a.kind == ActionKind::probe) {
        ++trace.probe_minutes;
        trace.recorded_minutes.push_back(a.minute);
      } else if (a.kind == ActionKind::record) {
        ++trace.extension_minutes;
        trace.recorded_minutes.push_back(a.minute);
      } else {
        ++trace.buffered_segments;
      }
    }
  };
  for (std::size_t t = 0; t < timeline.size(); ++t) {
    const int minute = static_cast<int>(t);
    absorb(step(state, minute, timeline[t], d));
    if (timeline[t].idle && timeline[t].charging && !state.buffered_segments.empty()) {
      const auto results = process_buffer(state.buffered_segments, d, user_language);
      for (std::size_t i = 0; i < results.size(); ++i) {
        trace.processed.push_back({minute, state.buffered_segments[i], results[i].has_value()});
        if (results[i]) trace.accepted_tokens.push_back(*results[i]);
      }
      state.buffered_segments.clear();
    }
  }
  absorb(finish(state));
  trace.pending = state.buffered_segments;
  return trace;
}

DeviceTimeline parse_timeline_csv(const std::string& text) {
  DeviceTimeline out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("minute", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "timeline line " + std::to_string(line_no);
    if (cells.size() != 4) throw Error(where + ": expected 4 columns");
    auto flag = [&](const std::string& c) {
      if (c == "0") return false;
      if (c == "1") return true;
      throw Error(where + ": flags must be 0 or 1");
    };
    int minute = 0;
    try {
      std::size_t used = 0;
      minute = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw Error("");
    } catch (...) {
      throw Error(where + ": bad minute");
    }
    if (minute != static_cast<int>(out.size())) throw Error(where + ": minutes must be consecutive from 0");
    out.push_back({flag(cells[1]), flag(cells[2]), flag(cells[3])});
  }
  return out;
}

std::string trace_json(const CollectionTrace& t) {
  auto seg = [](const Segment& s) { return "[" + std::to_string(s.start) + "," + std::to_string(s.end) + "]"; };
  std::string out = "{\"recorded_minutes\":" + std::to_string(t.recorded_minutes.size()) +
                    ",\"probe_minutes\":" + std::to_string(t.probe_minutes) +
                    ",\"extension_minutes\":" + std::to_string(t.extension_minutes) +
                    ",\"buffered_segments\":" + std::to_string(t.buffered_segments) + ",\"processed\":[";
  for (std::size_t i = 0; i < t.processed.size(); ++i) {
    if (i) out += ',';
    out += "{\"minute\":" + std::to_string(t.processed[i].minute) + ",\"segment\":" + seg(t.processed[i].segment) +
           ",\"accepted\":" + (t.processed[i].accepted ? "true" : "false") + "}";
  }
  out += "],\"accepted_tokens\":[";
  for (std::size_t i = 0; i < t.accepted_tokens.size(); ++i) {
    if (i) out += ',';
    out += "[";
    for (std::size_t k = 0; k < t.accepted_tokens[i].size(); ++k) {
      if (k) out += ',';
      out += quote_json(t.accepted_tokens[i][k]);
    }
    out += "]";
  }
  out += "],\"pending\":[";
  for (std::size_t i = 0; i < t.pending.size(); ++i) {
    if (i) out += ',';
    out += seg(t.pending[i]);
  }
  return out + "]}\n";
}

}  // namespace dutycycle
}  // namespace contextfed
