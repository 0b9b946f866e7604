#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contextfed/call.hpp"
#include "contextfed/context.hpp"
#include "contextfed/eval.hpp"
#include "contextfed/types.hpp"

namespace contextfed {

/// 2023-03-01T00:00:00Z.
inline constexpr Timestamp kDefaultOrigin = 1677628800;

/// Phone logs for one local day. Each fix stands for one hour of presence.
struct DailyLog {
  std::vector<GeoFix> fixes;
  std::vector<Motion> hourly_motion;
  double sleep_end_hour = 7.0;
  double unlock_minutes = 0.0;
  int unlock_count = 0;
};

/// Self-reports on the 0-100 scale.
struct DailyLabels {
  double stress = 0.0;
  double anxiety = 0.0;
  double mood = 0.0;
};

struct ClientDataset {
  std::string user_id;
  UserProfile profile;
  std::vector<TextEvent> events;  // timestamp order
  std::optional<int> phq9;
  std::vector<DailyLabels> daily_labels;  // one per day, or empty
  std::vector<DailyLog> daily_logs;       // one per day, or empty
};

struct Cohort {
  Timestamp origin = kDefaultOrigin;
  int days = 10;
  std::vector<ClientDataset> clients;

  std::vector<std::string> user_ids() const;
};

struct CohortSpec {
  std::size_t num_users = 46;
  int days = 10;
  double speech_words_per_day = 1349.2;
  double keyboard_words_per_day = 452.1;
  /// Where the latent state leaks into word choice. Unset: nowhere.
  std::optional<MemberKey> signal_context = MemberKey{Source::keyboard, ContextLabel::T_N};
  /// Share of the signal-word rate driven by the latent state, in [0, 1].
  double signal_strength = 0.8;
  /// Upper bound on the per-token probability of a signal word.
  double signal_rate = 0.25;
  /// Share of nontext variation driven by the latent state (scaled again by
  /// signal_strength).
  double nontext_strength = 0.5;
  /// Probability that a user-day has no text at all.
  double silent_day_rate = 0.02;
  Timestamp origin = kDefaultOrigin;
  std::uint64_t rng_seed = 0;
};

inline constexpr std::size_t kNontextFeatures = 7;
using NontextVector = std::array<double, kNontextFeatures>;

namespace synth {

/// Throws Error naming the first violated invariant.
void validate(const CohortSpec& spec);

Cohort generate_cohort(const CohortSpec& spec);

const std::vector<std::string>& signal_words();
const std::vector<std::string>& noise_words();

const std::array<std::string_view, kNontextFeatures>& nontext_feature_names();

/// profile.home_center when set, otherwise the detected home over all fixes.
/// Throws Error("no location data") when neither exists.
Coordinates resolve_home(const ClientDataset& client);

/// Stationary hours, conversations, sleep end, hours at home, unlock
/// minutes, unlock count, places visited. A day without logs or events
/// yields zeros with sleep end at 7.0.
NontextVector nontext_features(const ClientDataset& client, int day, Timestamp origin,
                               const std::optional<Coordinates>& home);

/// The label of `task` for one period (the day for per-day tasks; the whole
/// window for depression), or nullopt when unavailable.
std::optional<double> task_label(const ClientDataset& client, const TaskSpec& task, int period);

/// JSON lines: a header, then each user followed by their events.
std::string serialize_cohort(const Cohort& c);
Cohort parse_cohort(const std::string& text);
Cohort load_cohort(const std::string& path);
void save_cohort(const Cohort& c, const std::string& path);

}  // namespace synth
}  // namespace contextfed
