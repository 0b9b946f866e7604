#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace contextfed {

enum class Source { speech, keyboard };
enum class Motion { stationary, moving };
enum class Task { classification, regression };

std::string_view to_string(Source s);
std::string_view to_string(Motion m);
std::string_view to_string(Task t);
Source parse_source(std::string_view s);
Motion parse_motion(std::string_view s);

/// Seconds since the Unix epoch (UTC).
using Timestamp = std::int64_t;

struct GeoFix {
  double latitude = 0.0;
  double longitude = 0.0;
  Timestamp timestamp = 0;
};

/// One utterance or typing burst.
struct TextEvent {
  std::string user_id;
  Timestamp timestamp = 0;
  Source source = Source::keyboard;
  std::vector<std::string> tokens;
  GeoFix geo;
  Motion motion = Motion::stationary;
  /// Present for keyboard events only.
  std::optional<std::string> app_id;
};

}  // namespace contextfed
