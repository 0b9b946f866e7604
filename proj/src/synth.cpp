#include "contextfed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include "json.hpp"

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"
#include "contextfed/rng.hpp"

namespace contextfed {

std::vector<std::string> Cohort::user_ids() const {
  std::vector<std::string> ids;
  for (const auto& c : clients) ids.push_back(c.user_id);
  return ids;
}

namespace synth {
namespace {

constexpr double kMetersPerDegree = 111320.0;
constexpr std::array<int, 4> kUtcOffsets = {-300, -360, -420, -480};
const std::array<std::string, 3> kCommApps = {"whatsapp", "messages", "telegram"};
const std::array<std::string, 5> kOtherApps = {"notes", "chrome", "instagram", "youtube", "maps"};

struct Place {
  double lat = 0.0;
  double lon = 0.0;
};

struct Persona {
  double mu = 0.0;
  double p_night = 0.0;
  double p_home = 0.0;
  double p_moving = 0.0;
  double p_comm = 0.0;
  double baseline = 0.0;  // signal-word propensity outside the signal context
  double speech_volume = 1.0;
  double keyboard_volume = 1.0;
  int utc_offset = 0;
  Place home;
  std::vector<Place> others;
};

// Gamma(4, 1/4): mean 1, coefficient of variation 0.5.
double volume_multiplier(Rng& rng) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s -= std::log(1.0 - rng.uniform());
  return s / 4.0;
}

GeoFix jittered(const Place& p, Timestamp ts, Rng& rng) {
  const double lat = p.lat + rng.normal(0.0, 15.0) / kMetersPerDegree;
  const double lon = p.lon + rng.normal(0.0, 15.0) / (kMetersPerDegree * std::cos(p.lat * std::numbers::pi / 180.0));
  return {lat, lon, ts};
}

Persona make_persona(Rng& rng) {
  Persona p;
  p.mu = rng.uniform();
  p.p_night = rng.uniform(0.15, 0.6);
  p.p_home = rng.uniform(0.3, 0.8);
  p.p_moving = rng.uniform(0.05, 0.35);
  p.p_comm = rng.uniform(0.3, 0.8);
  p.baseline = rng.uniform();
  p.speech_volume = volume_multiplier(rng);
  p.keyboard_volume = volume_multiplier(rng);
  p.utc_offset = kUtcOffsets[rng.below(kUtcOffsets.size())];
  p.home = {rng.uniform(30.0, 45.0), rng.uniform(-120.0, -75.0)};
  for (int i = 0; i < 3; ++i) {
    const double dist = rng.uniform(2000.0, 10000.0);
    const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dlat = dist * std::cos(bearing) / kMetersPerDegree;
    const double dlon = dist * std::sin(bearing) / (kMetersPerDegree * std::cos(p.home.lat * std::numbers::pi / 180.0));
    p.others.push_back({p.home.lat + dlat, p.home.lon + dlon});
  }
  return p;
}

Timestamp local_to_utc(Timestamp origin, int day, double local_hour, int utc_offset) {
  return origin + static_cast<Timestamp>(day) * 86400 + static_cast<Timestamp>(local_hour * 3600.0) -
         static_cast<Timestamp>(utc_offset) * 60;
}

int poisson_approx(double lambda, Rng& rng) {
  if (lambda <= 0.0) return 0;
  return static_cast<int>(std::max(0.0, std::round(lambda + std::sqrt(lambda) * rng.normal())));
}

bool in_signal_context(const MemberKey& key, Source src, bool night, bool home, bool moving, bool comm) {
  if (key.source != src) return false;
  switch (key.label) {
    case ContextLabel::T_D: return !night;
    case ContextLabel::T_N: return night;
    case ContextLabel::L_H: return home;
    case ContextLabel::L_O: return !home;
    case ContextLabel::M_S: return !moving;
    case ContextLabel::M_M: return moving;
    case ContextLabel::A_C: return src == Source::keyboard && comm;
    case ContextLabel::A_O: return src == Source::keyboard && !comm;
  }
  return false;
}

void generate_events(const CohortSpec& spec, const Persona& p, ClientDataset& client, int day, double m_d,
                     double u_d, Rng& rng) {
  const auto& signal = signal_words();
  const auto& noise = noise_words();
  for (Source src : {Source::speech, Source::keyboard}) {
    const bool speech = src == Source::speech;
    const double lambda = speech ? spec.speech_words_per_day * p.speech_volume
                                 : spec.keyboard_words_per_day * p.keyboard_volume;
    int remaining = poisson_approx(lambda, rng);
    while (remaining > 0) {
      const int lo = speech ? 20 : 5;
      const int hi = speech ? 200 : 40;
      const int burst = std::min(remaining, lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
      remaining -= burst;

      const bool night = rng.bernoulli(p.p_night);
      double hour;
      if (night) {
        const double h = rng.uniform() * 15.0;
        hour = h < 9.0 ? h : 18.0 + (h - 9.0);
      } else {
        hour = 9.0 + rng.uniform() * 9.0;
      }
      const bool home = rng.bernoulli(p.p_home);
      const bool moving = rng.bernoulli(p.p_moving);
      const bool comm = !speech && rng.bernoulli(p.p_comm);

      TextEvent ev;
      ev.user_id = client.user_id;
      ev.timestamp = local_to_utc(spec.origin, day, hour, p.utc_offset);
      ev.source = src;
      ev.motion = moving ? Motion::moving : Motion::stationary;
      const Place& where = home ? p.home : p.others[rng.below(p.others.size())];
      ev.geo = jittered(where, ev.timestamp, rng);
      if (!speech) ev.app_id = comm ? kCommApps[rng.below(kCommApps.size())] : kOtherApps[rng.below(kOtherApps.size())];

      double q = spec.signal_rate * p.baseline;
      if (spec.signal_context && in_signal_context(*spec.signal_context, src, night, home, moving, comm)) {
        q = spec.signal_rate * (spec.signal_strength * m_d + (1.0 - spec.signal_strength) * u_d);
      }
      ev.tokens.reserve(static_cast<std::size_t>(burst));
      for (int w = 0; w < burst; ++w) {
        if (rng.bernoulli(q)) {
          ev.tokens.push_back(signal[rng.below(signal.size())]);
        } else {
          ev.tokens.push_back(noise[rng.below(noise.size())]);
        }
      }
      client.events.push_back(std::move(ev));
    }
  }
}

DailyLog generate_log(const CohortSpec& spec, const Persona& p, int day, double m_d, Rng& rng) {
  const double ns = spec.nontext_strength * spec.signal_strength;
  const double centered = m_d - 0.5;
  DailyLog log;
  for (int h = 0; h < 24; ++h) {
    const Timestamp ts = local_to_utc(spec.origin, day, h + 0.5, p.utc_offset);
    const bool home = h < 8 || h >= 21 || rng.bernoulli(p.p_home);
    const Place& where = home ? p.home : p.others[rng.below(p.others.size())];
    log.fixes.push_back(jittered(where, ts, rng));
    log.hourly_motion.push_back(rng.bernoulli(p.p_moving) ? Motion::moving : Motion::stationary);
  }
  log.sleep_end_hour = std::clamp(7.0 + 3.0 * ns * centered + rng.normal(0.0, 0.6), 4.0, 12.0);
  log.unlock_minutes = std::max(0.0, 150.0 + 200.0 * ns * centered + rng.normal(0.0, 40.0));
  log.unlock_count = static_cast<int>(std::max(0.0, std::round(60.0 + 60.0 * ns * centered + rng.normal(0.0, 15.0))));
  return log;
}

}  // namespace

void validate(const CohortSpec& spec) {
  if (spec.num_users < 2) throw Error("cohort needs at least 2 users");
  if (spec.days < 1) throw Error("cohort needs at least 1 day");
  if (!(spec.speech_words_per_day >= 0.0) || !(spec.keyboard_words_per_day >= 0.0)) {
    throw Error("words per day must be non-negative");
  }
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
  };
  unit(spec.signal_strength, "signal_strength");
  unit(spec.signal_rate, "signal_rate");
  unit(spec.nontext_strength, "nontext_strength");
  unit(spec.silent_day_rate, "silent_day_rate");
  if (spec.signal_context) {
    const auto k = *spec.signal_context;
    if (k.source == Source::speech && (k.label == ContextLabel::A_C || k.label == ContextLabel::A_O)) {
      throw Error("speech has no application context");
    }
  }
}

const std::vector<std::string>& signal_words() {
  static const std::vector<std::string> words = {
      "tired",   "alone",   "hopeless", "sad",      "empty",    "worthless", "cry",     "exhausted",
      "anxious", "worried", "sleepless", "lonely",  "hurt",     "numb",      "guilty",  "afraid",
      "stressed", "angry",  "broken",   "lost",     "heavy",    "pain",      "restless", "nervous",
      "miserable", "dark",  "useless",  "helpless", "awful",    "drained"};
  return words;
}

const std::vector<std::string>& noise_words() {
  static const std::vector<std::string> words = [] {
    const std::string consonants = "bcdfghjklmnprstvwz";
    const std::string vowels = "aeiou";
    Rng rng(0x6e6f697365ULL);
    std::set<std::string> seen(signal_words().begin(), signal_words().end());
    std::vector<std::string> out;
    while (out.size() < 2000) {
      const int syllables = 2 + static_cast<int>(rng.below(2));
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += consonants[rng.below(consonants.size())];
        w += vowels[rng.below(vowels.size())];
      }
      if (seen.insert(w).second) out.push_back(w);
    }
    return out;
  }();
  return words;
}

const std::array<std::string_view, kNontextFeatures>& nontext_feature_names() {
  static const std::array<std::string_view, kNontextFeatures> names = {
      "stationary_hours", "conversations", "sleep_end_hour", "home_hours",
      "unlock_minutes",   "unlock_count",  "places_visited"};
  return names;
}

Cohort generate_cohort(const CohortSpec& spec) {
  validate(spec);
  Cohort cohort;
  cohort.origin = spec.origin;
  cohort.days = spec.days;
  const int width = spec.num_users > 100 ? 3 : 2;
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    Rng rng(derive_seed(spec.rng_seed, 0xc0, u));
    const Persona p = make_persona(rng);

    ClientDataset client;
    std::string id = std::to_string(u);
    client.user_id = "u" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    client.profile.utc_offset_minutes = p.utc_offset;
    client.profile.comm_apps = context::default_comm_apps();

    double m_sum = 0.0;
    for (int d = 0; d < spec.days; ++d) {
      const double m_d = std::clamp(p.mu + rng.normal(0.0, 0.1), 0.0, 1.0);
      const double u_d = rng.uniform();
      m_sum += m_d;
      DailyLabels labels;
      labels.stress = std::clamp(20.0 + 60.0 * m_d + rng.normal(0.0, 8.0), 0.0, 100.0);
      labels.anxiety = std::clamp(15.0 + 55.0 * m_d + rng.normal(0.0, 8.0), 0.0, 100.0);
      labels.mood = std::clamp(85.0 - 60.0 * m_d + rng.normal(0.0, 8.0), 0.0, 100.0);
      client.daily_labels.push_back(labels);
      client.daily_logs.push_back(generate_log(spec, p, d, m_d, rng));
      if (!rng.bernoulli(spec.silent_day_rate)) generate_events(spec, p, client, d, m_d, u_d, rng);
    }
    const double m_mean = m_sum / spec.days;
    client.phq9 = std::clamp(static_cast<int>(std::lround(27.0 * m_mean * m_mean)), 0, 27);
    std::stable_sort(client.events.begin(), client.events.end(),
                     [](const TextEvent& a, const TextEvent& b) { return a.timestamp < b.timestamp; });
    cohort.clients.push_back(std::move(client));
  }
  return cohort;
}

Coordinates resolve_home(const ClientDataset& client) {
  if (client.profile.home_center) return *client.profile.home_center;
  std::vector<GeoFix> all;
  for (const auto& log : client.daily_logs) all.insert(all.end(), log.fixes.begin(), log.fixes.end());
  if (all.empty()) {
    for (const auto& ev : client.events) all.push_back(ev.geo);
  }
  return context::detect_home(all, client.profile.home_radius_m);
}

NontextVector nontext_features(const ClientDataset& client, int day, Timestamp origin,
                               const std::optional<Coordinates>& home) {
  NontextVector f{};
  f[2] = 7.0;
  for (const auto& ev : client.events) {
    if (ev.source == Source::speech &&
        context::local_day_index(ev.timestamp, client.profile.utc_offset_minutes, origin) == day) {
      f[1] += 1.0;
    }
  }
  if (day < 0 || static_cast<std::size_t>(day) >= client.daily_logs.size()) return f;
  const DailyLog& log = client.daily_logs[static_cast<std::size_t>(day)];
  f[0] = static_cast<double>(std::count(log.hourly_motion.begin(), log.hourly_motion.end(), Motion::stationary));
  f[2] = log.sleep_end_hour;
  if (home) {
    for (const auto& fix : log.fixes) {
      if (context::haversine_m(fix.latitude, fix.longitude, home->latitude, home->longitude) <=
          client.profile.home_radius_m) {
        f[3] += 1.0;
      }
    }
  }
  f[4] = log.unlock_minutes;
  f[5] = log.unlock_count;
  if (!log.fixes.empty()) {
    f[6] = static_cast<double>(context::leader_clusters(log.fixes, context::kDefaultHomeRadiusM).size());
  }
  return f;
}

std::optional<double> task_label(const ClientDataset& client, const TaskSpec& task, int period) {
  if (task.name == TaskName::depression) {
    if (!client.phq9) return std::nullopt;
    return static_cast<double>(eval::binarize_phq9(*client.phq9));
  }
  if (period < 0 || static_cast<std::size_t>(period) >= client.daily_labels.size()) return std::nullopt;
  const DailyLabels& l = client.daily_labels[static_cast<std::size_t>(period)];
  switch (task.name) {
    case TaskName::stress: return l.stress;
    case TaskName::anxiety: return l.anxiety;
    case TaskName::mood: return l.mood;
    case TaskName::depression: break;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON lines

namespace {

constexpr std::string_view kFormat = "contextfed-cohort";

std::string string_array(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += quote_json(v[i]);
  }
  return out + "]";
}

std::string user_line(const ClientDataset& c) {
  std::string out = "{\"type\":\"user\",\"user_id\":" + quote_json(c.user_id) +
                    ",\"utc_offset_minutes\":" + std::to_string(c.profile.utc_offset_minutes) + ",\"home_center\":";
  if (c.profile.home_center) {
    out += "[" + format_double(c.profile.home_center->latitude) + "," + format_double(c.profile.home_center->longitude) + "]";
  } else {
    out += "null";
  }
  out += ",\"home_radius_m\":" + format_double(c.profile.home_radius_m);
  out += ",\"comm_apps\":" + string_array({c.profile.comm_apps.begin(), c.profile.comm_apps.end()});
  out += ",\"phq9\":" + (c.phq9 ? std::to_string(*c.phq9) : std::string("null"));
  out += ",\"daily_labels\":[";
  for (std::size_t d = 0; d < c.daily_labels.size(); ++d) {
    const auto& l = c.daily_labels[d];
    if (d) out += ',';
    out += "[" + format_double(l.stress) + "," + format_double(l.anxiety) + "," + format_double(l.mood) + "]";
  }
  out += "],\"daily_logs\":[";
  for (std::size_t d = 0; d < c.daily_logs.size(); ++d) {
    const auto& log = c.daily_logs[d];
    if (d) out += ',';
    out += "{\"fixes\":[";
    for (std::size_t i = 0; i < log.fixes.size(); ++i) {
      if (i) out += ',';
      out += "[" + std::to_string(log.fixes[i].timestamp) + "," + format_double(log.fixes[i].latitude) + "," +
             format_double(log.fixes[i].longitude) + "]";
    }
    std::string motion;
    for (Motion m : log.hourly_motion) motion += m == Motion::moving ? 'M' : 'S';
    out += "],\"motion\":" + quote_json(motion) + ",\"sleep_end_hour\":" + format_double(log.sleep_end_hour) +
           ",\"unlock_minutes\":" + format_double(log.unlock_minutes) +
           ",\"unlock_count\":" + std::to_string(log.unlock_count) + "}";
  }
  return out + "]}";
}

std::string event_line(const TextEvent& ev) {
  std::string text;
  for (std::size_t i = 0; i < ev.tokens.size(); ++i) {
    if (i) text += ' ';
    text += ev.tokens[i];
  }
  std::string out = "{\"type\":\"event\",\"user_id\":" + quote_json(ev.user_id) +
                    ",\"timestamp\":" + std::to_string(ev.timestamp) + ",\"source\":\"" +
                    std::string(to_string(ev.source)) + "\",\"text\":" + quote_json(text) +
                    ",\"lat\":" + format_double(ev.geo.latitude) + ",\"lon\":" + format_double(ev.geo.longitude) +
                    ",\"motion\":\"" + std::string(to_string(ev.motion)) + "\"";
  if (ev.app_id) out += ",\"app_id\":" + quote_json(*ev.app_id);
  return out + "}";
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

void parse_user(const nlohmann::json& j, ClientDataset& c, int days) {
  c.user_id = j.at("user_id").get<std::string>();
  if (c.user_id.empty()) throw Error("empty user_id");
  c.profile.utc_offset_minutes = j.value("utc_offset_minutes", 0);
  if (j.contains("home_center") && !j["home_center"].is_null()) {
    const auto& h = j["home_center"];
    c.profile.home_center = Coordinates{h.at(0).get<double>(), h.at(1).get<double>()};
  }
  c.profile.home_radius_m = j.value("home_radius_m", context::kDefaultHomeRadiusM);
  if (j.contains("comm_apps")) {
    for (const auto& a : j["comm_apps"]) c.profile.comm_apps.insert(a.get<std::string>());
  } else {
    c.profile.comm_apps = context::default_comm_apps();
  }
  if (j.contains("phq9") && !j["phq9"].is_null()) {
    const int s = j["phq9"].get<int>();
    if (s < 0 || s > 27) throw Error("PHQ-9 score out of range for user " + c.user_id);
    c.phq9 = s;
  }
  if (j.contains("daily_labels")) {
    for (const auto& l : j["daily_labels"]) {
      c.daily_labels.push_back({l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>()});
    }
    if (!c.daily_labels.empty() && static_cast<int>(c.daily_labels.size()) != days) {
      throw Error("user " + c.user_id + " has " + std::to_string(c.daily_labels.size()) + " daily labels for " +
                  std::to_string(days) + " days");
    }
  }
  if (j.contains("daily_logs")) {
    for (const auto& lj : j["daily_logs"]) {
      DailyLog log;
      for (const auto& f : lj.value("fixes", nlohmann::json::array())) {
        log.fixes.push_back({f.at(1).get<double>(), f.at(2).get<double>(), f.at(0).get<Timestamp>()});
      }
      for (char ch : lj.value("motion", std::string())) {
        if (ch != 'S' && ch != 'M') throw Error("motion string must use S and M for user " + c.user_id);
        log.hourly_motion.push_back(ch == 'M' ? Motion::moving : Motion::stationary);
      }
      log.sleep_end_hour = lj.value("sleep_end_hour", 7.0);
      log.unlock_minutes = lj.value("unlock_minutes", 0.0);
      log.unlock_count = lj.value("unlock_count", 0);
      c.daily_logs.push_back(std::move(log));
    }
    if (!c.daily_logs.empty() && static_cast<int>(c.daily_logs.size()) != days) {
      throw Error("user " + c.user_id + " has " + std::to_string(c.daily_logs.size()) + " daily logs for " +
                  std::to_string(days) + " days");
    }
  }
}

TextEvent parse_event(const nlohmann::json& j) {
  TextEvent ev;
  ev.user_id = j.at("user_id").get<std::string>();
  ev.timestamp = j.at("timestamp").get<Timestamp>();
  ev.source = parse_source(j.at("source").get<std::string>());
  ev.tokens = split_words(j.at("text").get<std::string>());
  ev.geo = {j.value("lat", 0.0), j.value("lon", 0.0), ev.timestamp};
  ev.motion = parse_motion(j.value("motion", std::string("stationary")));
  if (j.contains("app_id") && !j["app_id"].is_null()) {
    if (ev.source == Source::speech) throw Error("speech event carries an app_id");
    ev.app_id = j["app_id"].get<std::string>();
  }
  return ev;
}

}  // namespace

std::string serialize_cohort(const Cohort& c) {
  std::string out = "{\"format\":\"" + std::string(kFormat) + "\",\"version\":1,\"origin\":" + std::to_string(c.origin) +
                    ",\"days\":" + std::to_string(c.days) + "}\n";
  for (const auto& client : c.clients) {
    out += user_line(client) + "\n";
    for (const auto& ev : client.events) out += event_line(ev) + "\n";
  }
  return out;
}

Cohort parse_cohort(const std::string& text) {
  Cohort cohort;
  std::map<std::string, std::size_t> index;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "cohort line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.value("format", std::string()) != kFormat) throw Error("missing cohort header");
        if (j.value("version", 0) != 1) throw Error("unsupported cohort version");
        cohort.origin = j.at("origin").get<Timestamp>();
        cohort.days = j.at("days").get<int>();
        if (cohort.days < 1) throw Error("days must be positive");
        have_header = true;
        continue;
      }
      const std::string type = j.at("type").get<std::string>();
      if (type == "user") {
        ClientDataset c;
        parse_user(j, c, cohort.days);
        if (!index.emplace(c.user_id, cohort.clients.size()).second) throw Error("duplicate user " + c.user_id);
        cohort.clients.push_back(std::move(c));
      } else if (type == "event") {
        TextEvent ev = parse_event(j);
        auto it = index.find(ev.user_id);
        if (it == index.end()) throw Error("event for undeclared user " + ev.user_id);
        cohort.clients[it->second].events.push_back(std::move(ev));
      } else {
        throw Error("unknown record type " + type);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + "malformed record (" + std::string(e.what()) + ")");
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  if (!have_header) throw Error("cohort file is empty");
  for (auto& c : cohort.clients) {
    std::stable_sort(c.events.begin(), c.events.end(),
                     [](const TextEvent& a, const TextEvent& b) { return a.timestamp < b.timestamp; });
  }
  return cohort;
}

Cohort load_cohort(const std::string& path) {
  try {
    return parse_cohort(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void save_cohort(const Cohort& c, const std::string& path) { write_file(path, serialize_cohort(c)); }

}  // namespace synth
}  // namespace contextfed
