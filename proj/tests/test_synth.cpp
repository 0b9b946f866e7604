#include <algorithm>
#include <cmath>
#include <set>

#include "contextfed/error.hpp"
#include "contextfed/eval.hpp"
#include "contextfed/synth.hpp"
#include "doctest.h"

using namespace contextfed;

namespace {

CohortSpec small_spec(std::uint64_t seed) {
  CohortSpec s;
  s.num_users = 6;
  s.days = 3;
  s.rng_seed = seed;
  return s;
}

const Cohort& default_cohort() {
  static const Cohort c = [] {
    CohortSpec s;
    s.rng_seed = 5;
    return synth::generate_cohort(s);
  }();
  return c;
}

// Share of signal words in a user's keyboard text typed at night.
double night_signal_share(const ClientDataset& c) {
  static const std::set<std::string> signal(synth::signal_words().begin(), synth::signal_words().end());
  double hits = 0, total = 0;
  for (const auto& e : c.events) {
    if (e.source != Source::keyboard) continue;
    if (context::time_context(e.timestamp, c.profile.utc_offset_minutes) != ContextLabel::T_N) continue;
    for (const auto& t : e.tokens) {
      hits += signal.count(t);
      total += 1;
    }
  }
  return total > 0 ? hits / total : 0.0;
}

}  // namespace

TEST_CASE("generation is deterministic and sized by CohortSpec") {
  const auto a = synth::generate_cohort(small_spec(3));
  const auto b = synth::generate_cohort(small_spec(3));
  CHECK(synth::serialize_cohort(a) == synth::serialize_cohort(b));
  CHECK(synth::serialize_cohort(a) != synth::serialize_cohort(synth::generate_cohort(small_spec(4))));

  auto two = small_spec(1);
  two.num_users = 2;
  const auto c = synth::generate_cohort(two);
  REQUIRE(c.clients.size() == 2);
  CHECK(c.user_ids() == std::vector<std::string>{"u00", "u01"});
  for (const auto& cl : c.clients) {
    CHECK(cl.daily_labels.size() == 3);
    CHECK(cl.daily_logs.size() == 3);
  }
}

TEST_CASE("CohortSpec validation") {
  auto s = small_spec(0);
  s.num_users = 1;
  CHECK_THROWS_AS(synth::validate(s), Error);
  s = small_spec(0);
  s.signal_strength = 1.5;
  CHECK_THROWS_AS(synth::validate(s), Error);
  s = small_spec(0);
  s.signal_context = MemberKey{Source::speech, ContextLabel::A_C};
  CHECK_THROWS_AS(synth::validate(s), Error);
  std::set<std::string> sig(synth::signal_words().begin(), synth::signal_words().end());
  for (const auto& w : synth::noise_words()) CHECK(!sig.count(w));
}

TEST_CASE("labels and events respect their invariants") {
  const auto& c = default_cohort();
  REQUIRE(c.clients.size() == 46);
  int positives = 0;
  for (const auto& cl : c.clients) {
    REQUIRE(cl.phq9);
    CHECK(*cl.phq9 >= 0);
    CHECK(*cl.phq9 <= 27);
    positives += eval::binarize_phq9(*cl.phq9);
    for (const auto& l : cl.daily_labels) {
      for (double v : {l.stress, l.anxiety, l.mood}) {
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
      }
    }
    for (std::size_t i = 0; i < cl.events.size(); ++i) {
      const auto& e = cl.events[i];
      CHECK(!e.tokens.empty());
      CHECK(e.app_id.has_value() == (e.source == Source::keyboard));
      if (i) CHECK(cl.events[i - 1].timestamp <= e.timestamp);
    }
  }
  CHECK(positives > 5);
  CHECK(positives < 41);
}

TEST_CASE("cohort word counts track the spec means") {
  const auto& c = default_cohort();
  double speech = 0, keyboard = 0;
  for (const auto& cl : c.clients) {
    for (const auto& e : cl.events) (e.source == Source::speech ? speech : keyboard) += e.tokens.size();
  }
  const double user_days = 46.0 * 10.0;
  const CohortSpec spec;
  CHECK(std::abs(speech / user_days - spec.speech_words_per_day) < 0.2 * spec.speech_words_per_day);
  CHECK(std::abs(keyboard / user_days - spec.keyboard_words_per_day) < 0.2 * spec.keyboard_words_per_day);
}

TEST_CASE("nontext features") {
  ClientDataset empty;
  empty.daily_logs.resize(1);
  empty.daily_logs[0].sleep_end_hour = 7.0;
  const auto z = synth::nontext_features(empty, 0, kDefaultOrigin, std::nullopt);
  for (std::size_t k = 0; k < kNontextFeatures; ++k) CHECK(z[k] == (k == 2 ? 7.0 : 0.0));
  const auto none = synth::nontext_features(ClientDataset{}, 0, kDefaultOrigin, std::nullopt);
  CHECK(none[2] == 7.0);

  ClientDataset two;
  two.daily_logs.resize(1);
  for (int h = 0; h < 6; ++h) {
    two.daily_logs[0].fixes.push_back({40.0, -75.0, kDefaultOrigin + h * 3600});
    two.daily_logs[0].fixes.push_back({40.05, -75.0, kDefaultOrigin + h * 3600 + 1800});
  }
  // Brute-force oracle: count fixes that are not within 250 m of an earlier fix's cluster leader.
  std::vector<GeoFix> leaders;
  for (const auto& f : two.daily_logs[0].fixes) {
    bool joined = false;
    for (const auto& l : leaders) joined = joined || context::haversine_m(f.latitude, f.longitude, l.latitude, l.longitude) <= 250;
    if (!joined) leaders.push_back(f);
  }
  const auto f = synth::nontext_features(two, 0, kDefaultOrigin, Coordinates{40.0, -75.0});
  CHECK(f[6] == static_cast<double>(leaders.size()));
  CHECK(f[6] == 2.0);
  CHECK(f[3] == 6.0);

  const auto& c = default_cohort();
  const auto home = synth::resolve_home(c.clients[0]);
  CHECK(synth::nontext_features(c.clients[0], 4, c.origin, home) ==
        synth::nontext_features(c.clients[0], 4, c.origin, home));
  CHECK(synth::nontext_feature_names()[0] == "stationary_hours");
}

TEST_CASE("task labels") {
  const auto& cl = default_cohort().clients[3];
  const auto dep = synth::task_label(cl, TaskSpec::of(TaskName::depression), 0);
  REQUIRE(dep);
  CHECK(*dep == eval::binarize_phq9(*cl.phq9));
  CHECK(*synth::task_label(cl, TaskSpec::of(TaskName::mood), 2) == cl.daily_labels[2].mood);
  CHECK(!synth::task_label(cl, TaskSpec::of(TaskName::stress), 10));
}

TEST_CASE("signal share in the signal context grows with signal strength") {
  double prev = 0.0;
  for (double s : {0.0, 0.3, 0.6, 0.9}) {
    CohortSpec spec;
    spec.rng_seed = 11;
    spec.signal_strength = s;
    const auto c = synth::generate_cohort(spec);
    std::vector<double> share;
    std::vector<int> label;
    for (const auto& cl : c.clients) {
      share.push_back(night_signal_share(cl));
      label.push_back(eval::binarize_phq9(*cl.phq9));
    }
    const double a = eval::auroc(share, label);
    if (s == 0.0) CHECK(std::abs(a - 0.5) < 0.2);
    CHECK(a >= prev);
    prev = a;
  }
  CHECK(prev > 0.8);
}

TEST_CASE("cohort JSON lines round trip") {
  auto c = synth::generate_cohort(small_spec(8));
  c.clients[1].phq9.reset();
  c.clients[2].profile.home_center = Coordinates{1.5, 2.5};
  const auto text = synth::serialize_cohort(c);
  const auto back = synth::parse_cohort(text);
  CHECK(synth::serialize_cohort(back) == text);
  CHECK(!back.clients[1].phq9);
  CHECK(back.clients[2].profile.home_center->latitude == 1.5);
  CHECK(back.clients[0].events.size() == c.clients[0].events.size());

  CHECK_THROWS_WITH_AS(synth::parse_cohort("{\"format\":\"nope\"}\n"), doctest::Contains("line 1"), Error);
  const auto header = text.substr(0, text.find('\n') + 1);
  CHECK_THROWS_WITH_AS(synth::parse_cohort(header + "{\"kind\":\"user\"\n"), doctest::Contains("line 2"), Error);
}
