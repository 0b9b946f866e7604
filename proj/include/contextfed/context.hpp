#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "contextfed/types.hpp"

namespace contextfed {

/// Temporal contexts: time (day/night), location (home/other), motion
/// (stationary/moving), application (communication/other).
enum class ContextLabel { T_D, T_N, L_H, L_O, M_S, M_M, A_C, A_O };

inline constexpr std::array<ContextLabel, 8> kAllContextLabels = {
    ContextLabel::T_D, ContextLabel::T_N, ContextLabel::L_H, ContextLabel::L_O,
    ContextLabel::M_S, ContextLabel::M_M, ContextLabel::A_C, ContextLabel::A_O};

std::string_view to_string(ContextLabel c);
ContextLabel parse_context_label(std::string_view s);

struct Coordinates {
  double latitude = 0.0;
  double longitude = 0.0;
};

struct UserProfile {
  int utc_offset_minutes = 0;
  std::optional<Coordinates> home_center;
  double home_radius_m = 250.0;
  std::set<std::string> comm_apps;
};

namespace context {

inline constexpr double kDefaultHomeRadiusM = 250.0;

/// Great-circle distance in meters.
double haversine_m(double lat1, double lon1, double lat2, double lon2);

/// Local hour in [9, 18) is daytime, everything else night.
ContextLabel time_context(Timestamp ts, int utc_offset_minutes);

/// Local calendar day index of `ts` counted from `origin` (a UTC midnight).
int local_day_index(Timestamp ts, int utc_offset_minutes, Timestamp origin);

/// Greedy leader clustering of fixes in timestamp order.
struct Cluster {
  GeoFix leader;
  std::vector<std::size_t> members;  // indices into the sorted fix list
  Coordinates centroid;
};
std::vector<Cluster> leader_clusters(std::vector<GeoFix> fixes, double radius_m);

/// Centroid of the cluster with the most fixes (ties: earliest founded).
/// Throws Error("no location data") on empty input.
Coordinates detect_home(const std::vector<GeoFix>& fixes, double radius_m = kDefaultHomeRadiusM);

ContextLabel location_context(const GeoFix& fix, const UserProfile& profile);
ContextLabel motion_context(Motion m);
ContextLabel app_context(const std::string& app_id, const UserProfile& profile);

/// Keyboard events get four labels (T, L, M, A); speech events three.
std::vector<ContextLabel> assign_contexts(const TextEvent& event, const UserProfile& profile);

/// Communication-app list from a JSON config ({"comm_apps":[...]}).
std::set<std::string> load_comm_apps(const std::string& path);
std::set<std::string> default_comm_apps();

/// GeoFix trace as CSV rows `timestamp,lat,lon`; an optional header row is skipped.
std::vector<GeoFix> parse_geofix_csv(const std::string& text);

}  // namespace context
}  // namespace contextfed
