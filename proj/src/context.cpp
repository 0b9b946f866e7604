#include "contextfed/context.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"
#include "json.hpp"

namespace contextfed {

std::string_view to_string(Source s) { return s == Source::speech ? "speech" : "keyboard"; }
std::string_view to_string(Motion m) { return m == Motion::stationary ? "stationary" : "moving"; }
std::string_view to_string(Task t) { return t == Task::classification ? "classification" : "regression"; }

Source parse_source(std::string_view s) {
  if (s == "speech") return Source::speech;
  if (s == "keyboard") return Source::keyboard;
  throw Error("unknown source: " + std::string(s));
}

Motion parse_motion(std::string_view s) {
  if (s == "stationary") return Motion::stationary;
  if (s == "moving") return Motion::moving;
  throw Error("unknown motion state: " + std::string(s));
}

std::string_view to_string(ContextLabel c) {
  switch (c) {
    case ContextLabel::T_D: return "T_D";
    case ContextLabel::T_N: return "T_N";
    case ContextLabel::L_H: return "L_H";
    case ContextLabel::L_O: return "L_O";
    case ContextLabel::M_S: return "M_S";
    case ContextLabel::M_M: return "M_M";
    case ContextLabel::A_C: return "A_C";
    case ContextLabel::A_O: return "A_O";
  }
  return "?";
}

ContextLabel parse_context_label(std::string_view s) {
  for (ContextLabel c : kAllContextLabels) {
    if (to_string(c) == s) return c;
  }
  throw Error("unknown context label: " + std::string(s));
}

namespace context {
namespace {
constexpr std::int64_t kDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
}  // namespace

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusM = 6371008.8;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

ContextLabel time_context(Timestamp ts, int utc_offset_minutes) {
  const std::int64_t local = ts + static_cast<std::int64_t>(utc_offset_minutes) * 60;
  const std::int64_t second_of_day = local - floor_div(local, kDay) * kDay;
  const std::int64_t hour = second_of_day / 3600;
  return (hour >= 9 && hour < 18) ? ContextLabel::T_D : ContextLabel::T_N;
}

int local_day_index(Timestamp ts, int utc_offset_minutes, Timestamp origin) {
  const std::int64_t local = ts + static_cast<std::int64_t>(utc_offset_minutes) * 60;
  return static_cast<int>(floor_div(local - origin, kDay));
}

std::vector<Cluster> leader_clusters(std::vector<GeoFix> fixes, double radius_m) {
  std::stable_sort(fixes.begin(), fixes.end(),
                   [](const GeoFix& a, const GeoFix& b) { return a.timestamp < b.timestamp; });
  std::vector<Cluster> clusters;
  std::vector<std::pair<double, double>> sums;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    const GeoFix& f = fixes[i];
    auto it = std::find_if(clusters.begin(), clusters.end(), [&](const Cluster& c) {
      return haversine_m(c.leader.latitude, c.leader.longitude, f.latitude, f.longitude) <= radius_m;
    });
    std::size_t k;
    if (it == clusters.end()) {
      clusters.push_back(Cluster{f, {}, {}});
      sums.emplace_back(0.0, 0.0);
      k = clusters.size() - 1;
    } else {
      k = static_cast<std::size_t>(it - clusters.begin());
    }
    clusters[k].members.push_back(i);
    sums[k].first += f.latitude;
    sums[k].second += f.longitude;
  }
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const double n = static_cast<double>(clusters[k].members.size());
    clusters[k].centroid = {sums[k].first / n, sums[k].second / n};
  }
  return clusters;
}

Coordinates detect_home(const std::vector<GeoFix>& fixes, double radius_m) {
  if (fixes.empty()) throw Error("no location data");
  const auto clusters = leader_clusters(fixes, radius_m);
  const Cluster* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.members.size() > best->members.size()) best = &c;
  }
  return best->centroid;
}

ContextLabel location_context(const GeoFix& fix, const UserProfile& profile) {
  if (!profile.home_center) return ContextLabel::L_O;
  const double d =
      haversine_m(fix.latitude, fix.longitude, profile.home_center->latitude, profile.home_center->longitude);
  return d <= profile.home_radius_m ? ContextLabel::L_H : ContextLabel::L_O;
}

ContextLabel motion_context(Motion m) { return m == Motion::stationary ? ContextLabel::M_S : ContextLabel::M_M; }

ContextLabel app_context(const std::string& app_id, const UserProfile& profile) {
  return profile.comm_apps.count(app_id) ? ContextLabel::A_C : ContextLabel::A_O;
}

std::vector<ContextLabel> assign_contexts(const TextEvent& event, const UserProfile& profile) {
  std::vector<ContextLabel> labels = {
      time_context(event.timestamp, profile.utc_offset_minutes),
      location_context(event.geo, profile),
      motion_context(event.motion),
  };
  if (event.source == Source::keyboard) labels.push_back(app_context(event.app_id.value_or(""), profile));
  return labels;
}

std::set<std::string> load_comm_apps(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid comm-app config " + path + ": " + e.what());
  }
  if (!j.contains("comm_apps") || !j["comm_apps"].is_array()) throw Error("comm-app config lacks comm_apps: " + path);
  std::set<std::string> apps;
  for (const auto& a : j["comm_apps"]) apps.insert(a.get<std::string>());
  return apps;
}

std::set<std::string> default_comm_apps() { return load_comm_apps(std::string(CONTEXTFED_DATA_DIR) + "/comm_apps.json"); }

std::vector<GeoFix> parse_geofix_csv(const std::string& text) {
  std::vector<GeoFix> fixes;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.find_first_of("0123456789") != 0 && line[0] != '-') continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
      throw Error("malformed GeoFix row at line " + std::to_string(line_no));
    }
    try {
      GeoFix f{std::stod(b), std::stod(c), std::stoll(a)};
      if (std::abs(f.latitude) > 90.0 || std::abs(f.longitude) > 180.0) {
        throw Error("coordinates out of range at line " + std::to_string(line_no));
      }
      fixes.push_back(f);
    } catch (const std::logic_error&) {
      throw Error("malformed GeoFix row at line " + std::to_string(line_no));
    }
  }
  return fixes;
}

}  // namespace context
}  // namespace contextfed
