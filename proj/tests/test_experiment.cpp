#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "contextfed/embed.hpp"
#include "contextfed/error.hpp"
#include "contextfed/experiment.hpp"
#include "contextfed/json_io.hpp"

namespace cf = contextfed;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    cf::parse_experiment_config(j);
  } catch (const cf::ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small enough for a unit test: 6 users, 2 days, light text.
json tiny(const std::string& method) {
  return json{{"method", method},
              {"seeds", {3}},
              {"threads", 1},
              {"fl", {{"rounds", 4}, {"local_epochs", 1}}},
              {"cl", {{"epochs", 30}}},
              {"embedding", {{"dim", 16}}},
              {"cohort",
               {{"num_users", 6}, {"days", 2}, {"speech_words_per_day", 120.0}, {"keyboard_words_per_day", 60.0}}}};
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("contextfed_exp_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config: defaults round-trip through to_json") {
  const auto cfg = cf::parse_experiment_config(json::object());
  CHECK(cfg.method == cf::Method::fedtherapist);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{17, 42, 1009});
  CHECK(cfg.cohort.num_users == 46);
  const json j = cf::to_json(cfg);
  CHECK(cf::to_json(cf::parse_experiment_config(j)) == j);

  json custom = tiny("fl_text");
  custom["task"] = "stress";
  custom["cl"]["l1_lambda"] = 0.5;
  custom["cohort"]["signal_context"] = nullptr;
  custom["folds"] = {{"mode", "louo_with_validation"}, {"validation_users", 2}};
  const auto c2 = cf::parse_experiment_config(custom);
  CHECK(c2.task == cf::TaskName::stress);
  CHECK(c2.cl.l1_lambda == 0.5);
  CHECK_FALSE(c2.cohort.signal_context.has_value());
  CHECK(c2.fold_mode == cf::FoldMode::louo_with_validation);
  const json j2 = cf::to_json(c2);
  CHECK(cf::to_json(cf::parse_experiment_config(j2)) == j2);
}

TEST_CASE("config: errors name the field") {
  CHECK(config_error({{"bogus", 1}}) == "config: bogus: unknown field");
  CHECK(config_error({{"fl", {{"round", 3}}}}) == "config: fl.round: unknown field");
  CHECK(config_error({{"sources", json::array()}}).rfind("config: sources: must be nonempty", 0) == 0);
  CHECK(config_error({{"method", "cl_nontext"}, {"sources", json::array()}}).empty());
  CHECK(config_error({{"sources", {"speech", "speech"}}}).find("sources") != std::string::npos);
  CHECK(config_error({{"method", "svm"}}).find("method") != std::string::npos);
  CHECK(config_error({{"seeds", json::array()}}).rfind("config: seeds:", 0) == 0);
  CHECK(config_error({{"chunk_size", 0}}).rfind("config: chunk_size:", 0) == 0);
  CHECK(config_error({{"fl", {{"learning_rate", -1.0}}}}).rfind("config: fl.learning_rate:", 0) == 0);
  CHECK(config_error({{"cl", {{"l1_lambda", -1.0}}}}).rfind("config: cl.l1_lambda:", 0) == 0);
  CHECK(config_error({{"embedding", {{"kind", "file"}}}}).rfind("config: embedding.path:", 0) == 0);
  CHECK(config_error({{"cohort", {{"num_users", 1}}}}).rfind("config: cohort:", 0) == 0);
  CHECK(config_error({{"cohort", {{"signal_rate", 1.5}}}}).rfind("config: cohort:", 0) == 0);
  CHECK(config_error({{"folds", {{"mode", "louo_with_validation"}, {"validation_users", 0}}}})
            .rfind("config: folds.validation_users:", 0) == 0);
  CHECK(config_error({{"chunk_size", "big"}}).rfind("config: chunk_size:", 0) == 0);

  const auto missing = scratch("missing.json").string();
  try {
    cf::load_experiment_config(missing);
    FAIL("expected ConfigError");
  } catch (const cf::ConfigError& e) {
    CHECK(std::string(e.what()).find(missing) != std::string::npos);
  }
}

TEST_CASE("cohort and training seeds") {
  const auto cfg = cf::parse_experiment_config(tiny("fedtherapist"));
  const auto a = cf::cohort_for_seed(cfg, 3);
  const auto b = cf::cohort_for_seed(cfg, 4);
  CHECK(a.clients.size() == 6);
  CHECK(cf::synth::serialize_cohort(a) == cf::synth::serialize_cohort(cf::cohort_for_seed(cfg, 3)));
  CHECK(cf::synth::serialize_cohort(a) != cf::synth::serialize_cohort(b));
  CHECK(cf::cl_seed(3, 0) != cf::cl_seed(3, 1));
  CHECK(cf::cl_seed(3, 0) != cf::fl_seed(3, 0));
}

TEST_CASE("cl_nontext matches a standalone training oracle") {
  json j = tiny("cl_nontext");
  j["cohort"]["num_users"] = 8;
  j["cohort"]["days"] = 3;
  const auto cfg = cf::parse_experiment_config(j);
  const auto report = cf::run_experiment(cfg);
  REQUIRE(report.seeds.size() == 1);
  const auto& sr = report.seeds[0];

  const auto cohort = cf::cohort_for_seed(cfg, 3);
  const auto task = cf::TaskSpec::of(cf::TaskName::depression);
  const std::size_t n = cohort.clients.size();
  std::vector<std::vector<double>> feat(n);
  std::vector<double> label(n);
  for (std::size_t u = 0; u < n; ++u) {
    const auto& c = cohort.clients[u];
    std::optional<cf::Coordinates> home;
    try {
      home = cf::synth::resolve_home(c);
    } catch (const cf::Error&) {
    }
    std::vector<double> sum(cf::kNontextFeatures, 0.0);
    for (int d = 0; d < cohort.days; ++d) {
      const auto v = cf::synth::nontext_features(c, d, cohort.origin, home);
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += v[k];
    }
    for (double& s : sum) s /= cohort.days;
    feat[u] = sum;
    label[u] = *cf::synth::task_label(c, task, 0);
  }

  REQUIRE(sr.folds.size() == n);
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<std::size_t> train;
    for (std::size_t u = 0; u < n; ++u) {
      if (u != f) train.push_back(u);
    }
    const double m = static_cast<double>(train.size());
    std::vector<double> mean(cf::kNontextFeatures, 0.0), sd(cf::kNontextFeatures, 0.0);
    for (std::size_t k = 0; k < mean.size(); ++k) {
      double s = 0.0, ss = 0.0;
      for (auto u : train) s += feat[u][k];
      mean[k] = s / m;
      for (auto u : train) ss += (feat[u][k] - mean[k]) * (feat[u][k] - mean[k]);
      sd[k] = ss > 0.0 ? std::sqrt(ss / m) : 1.0;
    }
    auto z = [&](const std::vector<double>& x) {
      std::vector<double> out(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / sd[k];
      return out;
    };
    std::vector<cf::Sample> samples;
    double pos = 0.0;
    for (auto u : train) {
      samples.push_back({z(feat[u]), label[u]});
      pos += label[u];
    }
    cf::TrainConfig tc = cfg.cl;
    tc.rng_seed = cf::cl_seed(3, f);
    if (pos > 0.0 && pos < m) tc.class_weights = {m / (2.0 * pos), m / (2.0 * (m - pos))};
    const auto model =
        cf::model::train_epochs(cf::LinearModel::zeros(cf::kNontextFeatures, cf::Task::classification), samples, tc);
    const double expect = cf::model::predict_score(model, z(feat[f]));
    const auto& fold = sr.folds[f];
    CHECK(fold.test_user == cohort.clients[f].user_id);
    REQUIRE(fold.predictions.size() == 1);
    CHECK(fold.predictions[0].label == label[f]);
    CHECK(std::abs(fold.predictions[0].value - expect) < 1e-9);
  }
}

TEST_CASE("runs are deterministic and independent of thread count") {
  for (const char* method : {"fedtherapist", "fl_text", "cl_nontext"}) {
    CAPTURE(method);
    auto cfg = cf::parse_experiment_config(tiny(method));
    const auto a = cf::eval::report_json(cf::run_experiment(cfg));
    cfg.threads = 3;
    const auto b = cf::eval::report_json(cf::run_experiment(cfg));
    CHECK(a == b);
    const auto r = cf::run_experiment(cfg);
    CHECK(r.fold_count == 6);
    CHECK(r.metric_name == "auroc");
    CHECK(r.overall.mean >= 0.0);
    CHECK(r.overall.mean <= 1.0);
  }
}

TEST_CASE("fedtherapist report lists every member") {
  auto cfg = cf::parse_experiment_config(tiny("fedtherapist"));
  const auto r = cf::run_experiment(cfg);
  CHECK(r.member_names.size() == 14);
  CHECK(r.seeds[0].ensemble_weights_mean.size() == 14);
  double total = 0.0;
  for (double w : r.seeds[0].ensemble_weights_mean) {
    CHECK(w >= 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  cfg.sources = {cf::Source::keyboard};
  cfg.ensemble_mode = cf::EnsembleMode::E_A;
  const auto k = cf::run_experiment(cfg);
  CHECK(k.member_names.size() == 8);
  REQUIRE(k.seeds[0].ensemble_weights_mean.size() == 8);
  for (double w : k.seeds[0].ensemble_weights_mean) CHECK(w == doctest::Approx(1.0 / 8).epsilon(1e-12));
}

TEST_CASE("regression task reports MAE per fold") {
  json j = tiny("fl_text");
  j["task"] = "stress";
  j["fl"]["l1_lambda"] = 0.001;
  const auto r = cf::run_experiment(cf::parse_experiment_config(j));
  CHECK(r.metric_name == "mae");
  for (const auto& f : r.seeds[0].folds) {
    REQUIRE(f.metric.has_value());
    CHECK(*f.metric >= 0.0);
    for (const auto& p : f.predictions) {
      CHECK(p.value >= 0.0);
      CHECK(p.value <= 100.0);
      CHECK(p.period >= 0);
      CHECK(p.period < 2);
    }
  }
}

TEST_CASE("validation folds report a validation metric") {
  json j = tiny("cl_nontext");
  j["task"] = "mood";
  j["folds"] = {{"mode", "louo_with_validation"}, {"validation_users", 2}};
  const auto r = cf::run_experiment(cf::parse_experiment_config(j));
  CHECK(r.fold_count == 6);
  for (const auto& f : r.seeds[0].folds) CHECK(f.validation_metric.has_value());
}

TEST_CASE("file embeddings reproduce the hash run") {
  const auto dir = scratch("file");
  std::filesystem::create_directories(dir);
  auto cfg = cf::parse_experiment_config(tiny("fedtherapist"));
  const auto cohort_path = (dir / "cohort.jsonl").string();
  cf::synth::save_cohort(cf::cohort_for_seed(cfg, 3), cohort_path);
  cfg.cohort_path = cohort_path;
  const auto hashed = cf::run_experiment(cfg);

  cf::EmbeddingStore store;
  const auto chunks = cf::list_experiment_chunks(cfg, cf::synth::load_cohort(cohort_path));
  REQUIRE_FALSE(chunks.empty());
  for (const auto& c : chunks) store.add(c.sample_id, cf::embed::hash_embed(c.tokens, cfg.embedding.dim, cfg.embedding.seed));
  const auto store_path = (dir / "emb.jsonl").string();
  cf::embed::save_embeddings(store, store_path);
  cfg.embedding.kind = cf::EmbeddingKind::file;
  cfg.embedding.path = store_path;
  const auto filed = cf::run_experiment(cfg);
  CHECK(cf::eval::report_json(hashed) == cf::eval::report_json(filed));

  // A missing id is an error naming it.
  store.vectors.erase(chunks.front().sample_id);
  cf::embed::save_embeddings(store, store_path);
  try {
    cf::run_experiment(cfg);
    FAIL("expected an error");
  } catch (const cf::Error& e) {
    CHECK(std::string(e.what()).find(chunks.front().sample_id) != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("write_outputs writes the report files") {
  const auto dir = scratch("out");
  json j = tiny("fl_text");
  j["history_every"] = 2;
  const auto cfg = cf::parse_experiment_config(j);
  const auto r = cf::run_experiment(cfg);
  cf::write_outputs(r, cfg, dir.string());
  for (const char* f : {"report.json", "report.csv", "summary.csv", "manifest.json", "history.csv"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto manifest = json::parse(cf::read_file((dir / "manifest.json").string()));
  CHECK(manifest["fold_count"] == 6);
  CHECK(manifest["config"] == cf::to_json(cfg));
  const auto history = cf::read_file((dir / "history.csv").string());
  CHECK(history.rfind("seed,fold,round,metric,value\n", 0) == 0);
  std::filesystem::remove_all(dir);
}
