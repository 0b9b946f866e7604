#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "contextfed/embed.hpp"

namespace contextfed {

enum class DutyPhase { Sleeping, Probing, Recording };
std::string_view to_string(DutyPhase p);

/// Inclusive minute span of recorded audio.
struct Segment {
  int start = 0;
  int end = 0;
  bool empty() const { return end < start; }
  int length() const { return empty() ? 0 : end - start + 1; }
  bool operator==(const Segment&) const = default;
};

struct MinuteFlags {
  bool conversation = false;
  bool idle = false;
  bool charging = false;
};
using DeviceTimeline = std::vector<MinuteFlags>;

/// Stand-ins for the on-device models. `voice_check` re-runs voice
/// detection on filtered audio; when unset a segment passes if vad is true
/// for any of its minutes.
struct Detectors {
  std::function<bool(int minute)> vad;
  std::function<Segment(const Segment&)> voice_filter;
  std::function<bool(const Segment&)> voice_check;
  std::function<std::string(const Segment&)> language_id;
  std::function<TokenList(const Segment&)> asr;
};

struct DutyState {
  DutyPhase phase = DutyPhase::Sleeping;
  int minute_in_cycle = 0;  // 0-3
  std::optional<int> open_start;
  int last_voiced = -1;
  std::vector<Segment> buffered_segments;
};

enum class ActionKind { probe, record, buffer };

struct Action {
  ActionKind kind = ActionKind::record;
  int minute = 0;
  Segment segment;  // set for buffer actions
};

struct CollectionTrace {
  std::vector<int> recorded_minutes;
  int probe_minutes = 0;
  int extension_minutes = 0;
  int buffered_segments = 0;
  struct Processed {
    int minute = 0;
    Segment segment;
    bool accepted = false;
  };
  std::vector<Processed> processed;
  std::vector<TokenList> accepted_tokens;
  std::vector<Segment> pending;  // still buffered at the end
};

namespace dutycycle {

inline constexpr int kCycleMinutes = 4;

/// Detectors that treat `conversation` as ground truth: vad reads the flag,
/// the voice filter is the identity, the language is `language`, and asr
/// emits one token per minute ("m<minute>"). `timeline` must outlive the
/// returned detectors.
Detectors oracle_detectors(const DeviceTimeline& timeline, const std::string& language);

/// Advances one minute. Sleeping probes at cycle minute 0 (probe and vad
/// happen within that minute); a voiced probe starts Recording, which
/// records every following minute until vad turns false, then buffers the
/// voiced span and sleeps.
std::vector<Action> step(DutyState& state, int minute, const MinuteFlags& flags, const Detectors& d);

/// Closes a segment still open at the end of the timeline.
std::vector<Action> finish(DutyState& state);

/// voice filter, voice re-check, language id, then asr. Segments failing a
/// stage are dropped; the result holds one entry per input, empty if dropped.
std::vector<std::optional<TokenList>> process_buffer(const std::vector<Segment>& segments, const Detectors& d,
                                                     const std::string& user_language);

/// Runs the whole timeline. Buffered segments are processed only during a
/// minute that is both idle and charging.
CollectionTrace simulate(const DeviceTimeline& timeline, const Detectors& d, const std::string& user_language);

/// `minute,conversation,idle,charging` with 0/1 flags and a header; minutes
/// must run 0, 1, 2, ... Throws Error naming the line on violations.
DeviceTimeline parse_timeline_csv(const std::string& text);

std::string trace_json(const CollectionTrace& t);

}  // namespace dutycycle
}  // namespace contextfed
