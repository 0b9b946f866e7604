#include "contextfed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"

namespace contextfed {

using nlohmann::json;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::cl_nontext: return "cl_nontext";
    case Method::fl_text: return "fl_text";
    case Method::fedtherapist: return "fedtherapist";
  }
  return "?";
}

std::string_view to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::hash: return "hash";
    case EmbeddingKind::tfidf: return "tfidf";
    case EmbeddingKind::file: return "file";
  }
  return "?";
}

std::string_view to_string(FoldMode m) { return m == FoldMode::louo ? "louo" : "louo_with_validation"; }

namespace {

// ---------------------------------------------------------------------------
// Config parsing

// Reads the fields of one JSON object and rejects any it did not consume.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(key, "wrong type");
    }
  }

  std::optional<std::string> text(const char* key) {
    std::optional<std::string> s;
    if (j_.contains(key)) {
      std::string v;
      get(key, v);
      s = v;
    }
    return s;
  }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string path(const char* key) const { return prefix_ + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("config: " + prefix_ + key + ": " + why);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(k, "unknown field");
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename F>
auto parse_enum(Fields& f, const char* key, F parse) -> std::optional<decltype(parse(std::string_view{}))> {
  const auto s = f.text(key);
  if (!s) return std::nullopt;
  try {
    return parse(*s);
  } catch (const Error& e) {
    f.fail(key, e.what());
  }
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::cl_nontext, Method::fl_text, Method::fedtherapist}) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown method " + std::string(s));
}

EmbeddingKind parse_embedding_kind(std::string_view s) {
  for (EmbeddingKind k : {EmbeddingKind::hash, EmbeddingKind::tfidf, EmbeddingKind::file}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown embedding kind " + std::string(s));
}

FoldMode parse_fold_mode(std::string_view s) {
  if (s == "louo") return FoldMode::louo;
  if (s == "louo_with_validation") return FoldMode::louo_with_validation;
  throw Error("unknown fold mode " + std::string(s));
}

void parse_train(Fields& f, TrainConfig& t) {
  f.get("learning_rate", t.learning_rate);
  f.get("batch_size", t.batch_size);
  f.get("l1_lambda", t.l1_lambda);
}

CohortSpec parse_cohort_spec(const json& j) {
  CohortSpec spec;
  Fields f(j, "cohort.");
  f.get("num_users", spec.num_users);
  f.get("days", spec.days);
  f.get("speech_words_per_day", spec.speech_words_per_day);
  f.get("keyboard_words_per_day", spec.keyboard_words_per_day);
  if (const json* sc = f.sub("signal_context")) {
    if (sc->is_null()) {
      spec.signal_context.reset();
    } else {
      Fields g(*sc, "cohort.signal_context.");
      MemberKey k;
      if (auto s = parse_enum(g, "source", parse_source)) k.source = *s;
      if (auto c = parse_enum(g, "context", parse_context_label)) k.label = *c;
      g.finish();
      spec.signal_context = k;
    }
  }
  f.get("signal_strength", spec.signal_strength);
  f.get("signal_rate", spec.signal_rate);
  f.get("nontext_strength", spec.nontext_strength);
  f.get("silent_day_rate", spec.silent_day_rate);
  f.get("origin", spec.origin);
  f.get("rng_seed", spec.rng_seed);
  f.finish();
  return spec;
}

json cohort_spec_json(const CohortSpec& s) {
  json j;
  j["num_users"] = s.num_users;
  j["days"] = s.days;
  j["speech_words_per_day"] = s.speech_words_per_day;
  j["keyboard_words_per_day"] = s.keyboard_words_per_day;
  if (s.signal_context) {
    j["signal_context"] = {{"source", std::string(to_string(s.signal_context->source))},
                           {"context", std::string(to_string(s.signal_context->label))}};
  } else {
    j["signal_context"] = nullptr;
  }
  j["signal_strength"] = s.signal_strength;
  j["signal_rate"] = s.signal_rate;
  j["nontext_strength"] = s.nontext_strength;
  j["silent_day_rate"] = s.silent_day_rate;
  j["origin"] = s.origin;
  j["rng_seed"] = s.rng_seed;
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  Fields f(j, "");
  if (auto m = parse_enum(f, "method", parse_method)) cfg.method = *m;
  if (const json* s = f.sub("sources")) {
    if (!s->is_array()) f.fail("sources", "expected an array");
    cfg.sources.clear();
    for (const auto& v : *s) {
      try {
        if (!cfg.sources.insert(parse_source(v.get<std::string>())).second) f.fail("sources", "duplicate source");
      } catch (const json::exception&) {
        f.fail("sources", "expected strings");
      } catch (const Error& e) {
        f.fail("sources", e.what());
      }
    }
  }
  if (auto t = parse_enum(f, "task", parse_task_name)) cfg.task = *t;
  if (auto m = parse_enum(f, "ensemble_mode", parse_ensemble_mode)) cfg.ensemble_mode = *m;
  if (auto m = parse_enum(f, "long_input", parse_long_input_mode)) cfg.long_input = *m;
  f.get("chunk_size", cfg.chunk_size);
  if (const json* e = f.sub("embedding")) {
    Fields g(*e, "embedding.");
    if (auto k = parse_enum(g, "kind", parse_embedding_kind)) cfg.embedding.kind = *k;
    g.get("dim", cfg.embedding.dim);
    g.get("seed", cfg.embedding.seed);
    g.get("vocab_size", cfg.embedding.vocab_size);
    g.get("ngram_min", cfg.embedding.ngram_min);
    g.get("ngram_max", cfg.embedding.ngram_max);
    g.get("path", cfg.embedding.path);
    g.finish();
  }
  if (const json* e = f.sub("fl")) {
    Fields g(*e, "fl.");
    g.get("rounds", cfg.fl.rounds);
    g.get("local_epochs", cfg.fl.local_epochs);
    g.get("clients_per_round", cfg.fl.clients_per_round);
    parse_train(g, cfg.fl.train);
    g.finish();
  }
  if (const json* e = f.sub("cl")) {
    Fields g(*e, "cl.");
    g.get("epochs", cfg.cl.epochs);
    parse_train(g, cfg.cl);
    g.finish();
  }
  if (const json* c = f.sub("cohort")) cfg.cohort = parse_cohort_spec(*c);
  f.get("cohort_path", cfg.cohort_path);
  f.get("seeds", cfg.seeds);
  if (const json* e = f.sub("folds")) {
    Fields g(*e, "folds.");
    if (auto m = parse_enum(g, "mode", parse_fold_mode)) cfg.fold_mode = *m;
    g.get("validation_users", cfg.validation_users);
    g.finish();
  }
  f.get("balance_classes", cfg.balance_classes);
  f.get("standardize_features", cfg.standardize_features);
  f.get("history_every", cfg.history_every);
  f.get("threads", cfg.threads);
  f.get("output_dir", cfg.output_dir);
  f.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw ConfigError("config: cannot read " + path);
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ConfigError("config: " + path + " is not valid JSON");
  }
  return parse_experiment_config(j);
}

void validate(const ExperimentConfig& cfg) {
  auto bad = [](const std::string& field, const std::string& why) { throw ConfigError("config: " + field + ": " + why); };
  if (cfg.method != Method::cl_nontext && cfg.sources.empty()) {
    bad("sources", "must be nonempty for method " + std::string(to_string(cfg.method)));
  }
  if (cfg.seeds.empty()) bad("seeds", "must be nonempty");
  if (cfg.chunk_size == 0) bad("chunk_size", "must be positive");
  if (cfg.embedding.dim < 1) bad("embedding.dim", "must be positive");
  if (cfg.embedding.vocab_size == 0) bad("embedding.vocab_size", "must be positive");
  if (cfg.embedding.ngram_min < 1 || cfg.embedding.ngram_max < cfg.embedding.ngram_min) {
    bad("embedding.ngram_min", "need 1 <= ngram_min <= ngram_max");
  }
  if (cfg.embedding.kind == EmbeddingKind::file && cfg.embedding.path.empty()) {
    bad("embedding.path", "required for file embeddings");
  }
  if (cfg.fl.rounds < 0) bad("fl.rounds", "must be non-negative");
  if (cfg.fl.local_epochs < 0) bad("fl.local_epochs", "must be non-negative");
  for (const auto& [name, t] : {std::pair<std::string, const TrainConfig&>{"fl.", cfg.fl.train}, {"cl.", cfg.cl}}) {
    if (!(t.learning_rate > 0.0) || !std::isfinite(t.learning_rate)) bad(name + "learning_rate", "must be positive");
    if (t.batch_size == 0) bad(name + "batch_size", "must be positive");
    if (!(t.l1_lambda >= 0.0)) bad(name + "l1_lambda", "must be non-negative");
  }
  if (cfg.cl.epochs < 0) bad("cl.epochs", "must be non-negative");
  if (cfg.history_every < 0) bad("history_every", "must be non-negative");
  if (cfg.fold_mode == FoldMode::louo_with_validation && cfg.validation_users == 0) {
    bad("folds.validation_users", "must be positive");
  }
  if (cfg.cohort_path.empty()) {
    try {
      synth::validate(cfg.cohort);
    } catch (const Error& e) {
      bad("cohort", e.what());
    }
  }
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["method"] = std::string(to_string(cfg.method));
  j["sources"] = json::array();
  for (Source s : cfg.sources) j["sources"].push_back(std::string(to_string(s)));
  j["task"] = std::string(to_string(cfg.task));
  j["ensemble_mode"] = std::string(to_string(cfg.ensemble_mode));
  j["long_input"] = std::string(to_string(cfg.long_input));
  j["chunk_size"] = cfg.chunk_size;
  j["embedding"] = {{"kind", std::string(to_string(cfg.embedding.kind))},
                    {"dim", cfg.embedding.dim},
                    {"seed", cfg.embedding.seed},
                    {"vocab_size", cfg.embedding.vocab_size},
                    {"ngram_min", cfg.embedding.ngram_min},
                    {"ngram_max", cfg.embedding.ngram_max},
                    {"path", cfg.embedding.path}};
  j["fl"] = {{"rounds", cfg.fl.rounds},
             {"local_epochs", cfg.fl.local_epochs},
             {"clients_per_round", cfg.fl.clients_per_round},
             {"learning_rate", cfg.fl.train.learning_rate},
             {"batch_size", cfg.fl.train.batch_size},
             {"l1_lambda", cfg.fl.train.l1_lambda}};
  j["cl"] = {{"epochs", cfg.cl.epochs},
             {"learning_rate", cfg.cl.learning_rate},
             {"batch_size", cfg.cl.batch_size},
             {"l1_lambda", cfg.cl.l1_lambda}};
  j["cohort"] = cohort_spec_json(cfg.cohort);
  j["cohort_path"] = cfg.cohort_path;
  j["seeds"] = cfg.seeds;
  j["folds"] = {{"mode", std::string(to_string(cfg.fold_mode))}, {"validation_users", cfg.validation_users}};
  j["balance_classes"] = cfg.balance_classes;
  j["standardize_features"] = cfg.standardize_features;
  j["history_every"] = cfg.history_every;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir;
  return j;
}

Cohort cohort_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.cohort_path.empty()) return synth::load_cohort(cfg.cohort_path);
  CohortSpec spec = cfg.cohort;
  spec.rng_seed = derive_seed(cfg.cohort.rng_seed, seed, 0xc0);
  return synth::generate_cohort(spec);
}

std::uint64_t cl_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, fold, 0); }
std::uint64_t fl_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, fold, 1); }

// ---------------------------------------------------------------------------
// Experiment

namespace {

struct UserData {
  const ClientDataset* client = nullptr;
  UserProfile profile;  // home resolved
  std::map<int, double> labels;
  std::set<int> text_periods;
  std::map<int, std::vector<double>> nontext;
  std::vector<ContextSample> context;
  std::vector<PeriodSample> pooled;
};

struct SeedContext {
  const ExperimentConfig& cfg;
  TaskSpec task;
  Timestamp origin;
  std::uint64_t seed;
  const EmbeddingStore* store;
  bool text_method;
};

call::GroupingOptions grouping(const SeedContext& sc) {
  call::GroupingOptions opt;
  opt.granularity = sc.task.per_day ? Granularity::per_day : Granularity::per_period;
  opt.mode = sc.cfg.long_input;
  opt.chunk_size = sc.cfg.chunk_size;
  opt.origin = sc.origin;
  opt.sources = sc.cfg.sources;
  return opt;
}

UserData prepare_user(const SeedContext& sc, const ClientDataset& client, int days) {
  UserData u;
  u.client = &client;
  u.profile = client.profile;
  try {
    u.profile.home_center = synth::resolve_home(client);
  } catch (const Error&) {
    // No location data: every event falls into L_O.
  }
  const int periods = sc.task.per_day ? days : 1;
  for (int p = 0; p < periods; ++p) {
    if (auto l = synth::task_label(client, sc.task, p)) u.labels[p] = *l;
  }
  for (const auto& ev : client.events) {
    if (!sc.cfg.sources.count(ev.source)) continue;
    const int p = sc.task.per_day
                      ? context::local_day_index(ev.timestamp, client.profile.utc_offset_minutes, sc.origin)
                      : 0;
    if (u.labels.count(p)) u.text_periods.insert(p);
  }
  if (sc.cfg.method == Method::cl_nontext) {
    for (const auto& [p, label] : u.labels) {
      std::vector<double> f(kNontextFeatures, 0.0);
      if (sc.task.per_day) {
        const auto v = synth::nontext_features(client, p, sc.origin, u.profile.home_center);
        std::copy(v.begin(), v.end(), f.begin());
      } else {
        for (int d = 0; d < days; ++d) {
          const auto v = synth::nontext_features(client, d, sc.origin, u.profile.home_center);
          for (std::size_t k = 0; k < kNontextFeatures; ++k) f[k] += v[k] / days;
        }
      }
      u.nontext[p] = std::move(f);
    }
  }
  return u;
}

void embed_user(const SeedContext& sc, UserData& u, const embed::Embedder& embedder) {
  const auto opt = grouping(sc);
  call::LabelFn label_of = [&u](int p) -> std::optional<double> {
    auto it = u.labels.find(p);
    if (it == u.labels.end()) return std::nullopt;
    return it->second;
  };
  if (sc.cfg.method == Method::fedtherapist) {
    u.context = call::build_context_datasets(u.client->events, u.profile, opt, embedder, label_of);
  } else if (sc.cfg.method == Method::fl_text) {
    u.pooled = call::build_pooled_dataset(u.client->events, u.profile, opt, embedder, label_of);
  }
}

std::unique_ptr<embed::Embedder> fit_tfidf(const SeedContext& sc, const std::vector<const UserData*>& train) {
  const auto opt = grouping(sc);
  std::vector<TokenList> corpus;
  for (const UserData* u : train) {
    for (auto& c : call::list_chunks(u->client->events, u->profile, opt, sc.cfg.method == Method::fl_text)) {
      corpus.push_back(std::move(c.tokens));
    }
  }
  return std::make_unique<embed::TfidfEmbedder>(
      embed::tfidf_fit(corpus, sc.cfg.embedding.vocab_size, sc.cfg.embedding.ngram_min, sc.cfg.embedding.ngram_max));
}

ClassWeights class_weights(const SeedContext& sc, const std::vector<const UserData*>& train) {
  if (sc.task.kind != Task::classification || !sc.cfg.balance_classes) return {};
  double pos = 0.0, neg = 0.0;
  for (const UserData* u : train) {
    for (const auto& [p, label] : u->labels) {
      const bool has_input = sc.cfg.method == Method::cl_nontext || u->text_periods.count(p);
      if (!has_input) continue;
      (label > 0.5 ? pos : neg) += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return {};
  const double n = pos + neg;
  return {n / (2.0 * pos), n / (2.0 * neg)};
}

// Per-dimension z-scoring keyed by context model (fl_text uses one key).
// Dimensions without variance are only centered.
class FeatureScaler {
 public:
  void fit(const MemberKey& key, const std::vector<const EmbeddingVector*>& xs) {
    if (xs.empty()) return;
    const std::size_t d = xs.front()->size();
    Stats st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    const double n = static_cast<double>(xs.size());
    for (const auto* x : xs) {
      for (std::size_t k = 0; k < d; ++k) st.mean[k] += (*x)[k] / n;
    }
    for (const auto* x : xs) {
      for (std::size_t k = 0; k < d; ++k) st.sd[k] += ((*x)[k] - st.mean[k]) * ((*x)[k] - st.mean[k]) / n;
    }
    for (double& v : st.sd) v = v > 0.0 ? std::sqrt(v) : 1.0;
    stats_[key] = std::move(st);
  }

  EmbeddingVector apply(const MemberKey& key, EmbeddingVector x) const {
    auto it = stats_.find(key);
    if (it == stats_.end()) return x;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = (x[k] - it->second.mean[k]) / it->second.sd[k];
    return x;
  }

 private:
  struct Stats {
    std::vector<double> mean, sd;
  };
  std::map<MemberKey, Stats> stats_;
};

double report_value(const TaskSpec& task, double score) { return model::to_report_scale(task.kind, score); }

// Per-period chunk lists of one user's context samples.
std::map<int, std::map<MemberKey, std::vector<EmbeddingVector>>> context_inputs(const UserData& u) {
  std::map<int, std::map<MemberKey, std::vector<EmbeddingVector>>> out;
  for (const auto& s : u.context) out[s.period][s.member].push_back(s.x);
  return out;
}

std::map<int, std::vector<EmbeddingVector>> pooled_inputs(const UserData& u) {
  std::map<int, std::vector<EmbeddingVector>> out;
  for (const auto& s : u.pooled) out[s.period].push_back(s.x);
  return out;
}

struct Predictor {
  // Appends predictions for every labeled period of `u` with input.
  std::function<void(const UserData& u, eval::FoldResult& out)> predict;
};

void predict_users(const std::vector<const UserData*>& users, const Predictor& p, eval::FoldResult& out) {
  for (const UserData* u : users) p.predict(*u, out);
}

std::optional<double> safe_metric(const TaskSpec& task, const std::vector<eval::Prediction>& preds) {
  if (preds.empty()) return std::nullopt;
  try {
    return eval::task_metric(task, preds);
  } catch (const Error&) {
    return std::nullopt;
  }
}

struct FoldOutput {
  eval::FoldResult result;
  std::vector<double> weights;  // E_E
};

FoldOutput run_fold(const SeedContext& sc, std::size_t fold_index, const eval::Fold& fold,
                    std::vector<UserData>& all, const std::map<std::string, std::size_t>& index) {
  const ExperimentConfig& cfg = sc.cfg;
  const TaskSpec& task = sc.task;
  std::vector<const UserData*> train, validation;
  for (const auto& id : fold.train_users) train.push_back(&all[index.at(id)]);
  for (const auto& id : fold.validation_users) validation.push_back(&all[index.at(id)]);
  const UserData& test_src = all[index.at(fold.test_user)];

  // TF-IDF vocabularies are fitted on the training users of this fold, so
  // each fold embeds private copies of the users it touches.
  std::vector<UserData> local;
  if (cfg.method != Method::cl_nontext && cfg.embedding.kind == EmbeddingKind::tfidf) {
    const auto embedder = fit_tfidf(sc, train);
    local.reserve(train.size() + validation.size() + 1);
    auto copy = [&](std::vector<const UserData*>& group) {
      for (auto& ptr : group) {
        local.push_back(*ptr);
        embed_user(sc, local.back(), *embedder);
        ptr = &local.back();
      }
    };
    copy(train);
    copy(validation);
    local.push_back(test_src);
    embed_user(sc, local.back(), *embedder);
  }
  const UserData& test = local.empty() ? test_src : local.back();

  FoldOutput out;
  out.result.test_user = fold.test_user;
  const ClassWeights cw = class_weights(sc, train);
  Predictor predictor;

  if (cfg.method == Method::cl_nontext) {
    std::vector<double> mean(kNontextFeatures, 0.0), sd(kNontextFeatures, 0.0);
    std::vector<Sample> samples;
    for (const UserData* u : train) {
      for (const auto& [p, f] : u->nontext) samples.push_back({f, u->labels.at(p)});
    }
    if (samples.empty()) throw Error("fold " + fold.test_user + " has no training samples");
    for (const auto& s : samples) {
      for (std::size_t k = 0; k < kNontextFeatures; ++k) mean[k] += s.x[k] / samples.size();
    }
    for (const auto& s : samples) {
      for (std::size_t k = 0; k < kNontextFeatures; ++k) sd[k] += (s.x[k] - mean[k]) * (s.x[k] - mean[k]) / samples.size();
    }
    for (double& v : sd) v = v > 0.0 ? std::sqrt(v) : 1.0;
    auto standardize = [mean, sd](std::vector<double> x) {
      for (std::size_t k = 0; k < kNontextFeatures; ++k) x[k] = (x[k] - mean[k]) / sd[k];
      return x;
    };
    for (auto& s : samples) s.x = standardize(std::move(s.x));
    TrainConfig tc = cfg.cl;
    tc.rng_seed = cl_seed(sc.seed, fold_index);
    tc.class_weights = cw;
    auto m = std::make_shared<LinearModel>(
        model::train_epochs(LinearModel::zeros(kNontextFeatures, task.kind), samples, tc));
    predictor.predict = [m, &task, standardize](const UserData& u, eval::FoldResult& r) {
      for (const auto& [p, f] : u.nontext) {
        const auto x = standardize(f);
        r.predictions.push_back({u.client->user_id, p, report_value(task, model::predict_score(*m, x)), u.labels.at(p)});
      }
    };
  } else {
    FLConfig fc = cfg.fl;
    fc.rng_seed = fl_seed(sc.seed, fold_index);
    fc.train.class_weights = cw;
    fc.train.epochs = 1;

    auto scaler = std::make_shared<FeatureScaler>();
    if (cfg.method == Method::fl_text) {
      if (cfg.standardize_features) {
        std::vector<const EmbeddingVector*> xs;
        for (const UserData* u : train) {
          for (const auto& ps : u->pooled) xs.push_back(&ps.x);
        }
        scaler->fit(MemberKey{}, xs);
      }
      std::vector<std::vector<Sample>> clients;
      for (const UserData* u : train) {
        std::vector<Sample> s;
        for (const auto& ps : u->pooled) s.push_back({scaler->apply(MemberKey{}, ps.x), ps.label});
        clients.push_back(std::move(s));
      }
      std::size_t d = static_cast<std::size_t>(cfg.embedding.dim);
      for (const auto& c : clients) {
        if (!c.empty()) d = c.front().x.size();
      }
      LinearTrainer trainer(std::move(clients), task.kind);
      fl::EvalHook hook;
      if (cfg.history_every > 0) {
        hook = [&](int round, std::span<const double> params, std::vector<RoundRecord>& history) {
          if (round % cfg.history_every != 0) return;
          const LinearModel m = model::unflatten(params, task.kind);
          double sum = 0.0;
          std::size_t n = 0;
          for (std::size_t c = 0; c < trainer.num_clients(); ++c) {
            const auto& s = trainer.client(c);
            if (s.empty()) continue;
            sum += model::loss(m, s, cw) * s.size();
            n += s.size();
          }
          history.push_back({round, "train_loss", n ? sum / n : 0.0});
        };
      }
      ServerState st = fl::run_rounds(fc, trainer, model::flatten(LinearModel::zeros(d, task.kind)), hook);
      out.result.history = std::move(st.history);
      auto m = std::make_shared<LinearModel>(model::unflatten(st.global_params, task.kind));
      predictor.predict = [m, &task, scaler](const UserData& u, eval::FoldResult& r) {
        for (auto& [p, chunks] : pooled_inputs(u)) {
          for (auto& c : chunks) c = scaler->apply(MemberKey{}, std::move(c));
          r.predictions.push_back(
              {u.client->user_id, p, report_value(task, call::member_score(*m, chunks)), u.labels.at(p)});
        }
      };
    } else {
      std::size_t d = static_cast<std::size_t>(cfg.embedding.dim);
      for (const UserData* u : train) {
        if (!u->context.empty()) d = u->context.front().x.size();
      }
      const EnsembleModel layout = EnsembleModel::for_sources(cfg.sources, d, task.kind, cfg.ensemble_mode);
      if (cfg.standardize_features) {
        std::map<MemberKey, std::vector<const EmbeddingVector*>> xs;
        for (const UserData* u : train) {
          for (const auto& cs : u->context) xs[cs.member].push_back(&cs.x);
        }
        for (const auto& [key, v] : xs) scaler->fit(key, v);
      }
      std::vector<call::CallDataset> clients;
      for (const UserData* u : train) {
        if (!cfg.standardize_features) {
          clients.push_back(call::index_samples(layout, u->context));
          continue;
        }
        std::vector<ContextSample> scaled = u->context;
        for (auto& cs : scaled) cs.x = scaler->apply(cs.member, std::move(cs.x));
        clients.push_back(call::index_samples(layout, scaled));
      }
      EnsembleTrainer trainer(layout, std::move(clients));
      fl::EvalHook hook;
      if (cfg.history_every > 0) {
        hook = [&](int round, std::span<const double> params, std::vector<RoundRecord>& history) {
          if (round % cfg.history_every != 0) return;
          const EnsembleModel ens = call::unflatten(layout, params);
          const auto w = ens.effective_weights();
          double sum = 0.0;
          std::size_t n = 0;
          for (const UserData* u : train) {
            for (auto& [p, inputs] : context_inputs(*u)) {
              for (auto& [key, chunks] : inputs) {
                for (auto& c : chunks) c = scaler->apply(key, std::move(c));
              }
              sum += call::ensemble_loss(task.kind, w, call::member_scores(ens, inputs), u->labels.at(p), cw);
              ++n;
            }
          }
          history.push_back({round, "train_loss", n ? sum / n : 0.0});
        };
      }
      ServerState st = fl::run_rounds(fc, trainer, call::flatten(layout), hook);
      out.result.history = std::move(st.history);
      auto ens = std::make_shared<EnsembleModel>(call::unflatten(layout, st.global_params));
      out.weights = ens->effective_weights();
      predictor.predict = [ens, &task, scaler](const UserData& u, eval::FoldResult& r) {
        for (auto& [p, inputs] : context_inputs(u)) {
          for (auto& [key, chunks] : inputs) {
            for (auto& c : chunks) c = scaler->apply(key, std::move(c));
          }
          const auto scores = call::member_scores(*ens, inputs);
          const double label = u.labels.at(p);
          r.predictions.push_back({u.client->user_id, p, report_value(task, call::combine(*ens, scores)), label});
          for (std::size_t m = 0; m < ens->size(); ++m) {
            r.member_predictions[to_string(ens->keys[m])].push_back(
                {u.client->user_id, p, report_value(task, scores[m]), label});
          }
        }
      };
    }
  }

  predictor.predict(test, out.result);
  if (task.kind == Task::regression) out.result.metric = safe_metric(task, out.result.predictions);
  if (!validation.empty()) {
    eval::FoldResult v;
    predict_users(validation, predictor, v);
    out.result.validation_metric = safe_metric(task, v.predictions);
  }
  return out;
}

eval::SeedResult run_seed(const ExperimentConfig& cfg, const TaskSpec& task, const Cohort& cohort, std::uint64_t seed,
                          const EmbeddingStore* store) {
  const SeedContext sc{cfg, task, cohort.origin, seed, store, cfg.method != Method::cl_nontext};
  eval::SeedResult sr;
  sr.seed = seed;

  std::vector<UserData> users;
  users.reserve(cohort.clients.size());
  for (const auto& c : cohort.clients) users.push_back(prepare_user(sc, c, cohort.days));

  std::unique_ptr<embed::Embedder> shared;
  if (sc.text_method) {
    if (cfg.embedding.kind == EmbeddingKind::hash) {
      shared = std::make_unique<embed::HashEmbedder>(cfg.embedding.dim, cfg.embedding.seed);
    } else if (cfg.embedding.kind == EmbeddingKind::file) {
      shared = std::make_unique<embed::StoreEmbedder>(*store);
    }
  }

  std::vector<std::string> eligible;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < users.size(); ++i) {
    UserData& u = users[i];
    const std::string& id = u.client->user_id;
    if (sc.text_method) {
      for (const auto& [p, label] : u.labels) {
        if (!u.text_periods.count(p)) sr.skipped.push_back(id + "|p" + std::to_string(p));
      }
      if (u.text_periods.empty()) continue;
      if (shared) embed_user(sc, u, *shared);
    } else if (u.labels.empty()) {
      continue;
    }
    index[id] = i;
    eligible.push_back(id);
  }
  if (eligible.size() < 2) {
    throw Error("fewer than 2 users have " + std::string(sc.text_method ? "text" : "labels") + " for task " +
                std::string(to_string(task.name)));
  }

  const auto folds = cfg.fold_mode == FoldMode::louo ? eval::louo_folds(eligible)
                                                     : eval::louo_with_validation(eligible, cfg.validation_users);
  std::vector<FoldOutput> outputs(folds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t f = next.fetch_add(1);
      if (f >= folds.size()) return;
      try {
        outputs[f] = run_fold(sc, f, folds[f], users, index);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, folds.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  std::vector<eval::Prediction> all;
  std::map<std::string, std::vector<eval::Prediction>> members;
  for (auto& o : outputs) {
    all.insert(all.end(), o.result.predictions.begin(), o.result.predictions.end());
    for (const auto& [name, preds] : o.result.member_predictions) {
      members[name].insert(members[name].end(), preds.begin(), preds.end());
    }
    if (!o.weights.empty()) {
      if (sr.ensemble_weights_mean.empty()) sr.ensemble_weights_mean.assign(o.weights.size(), 0.0);
      for (std::size_t k = 0; k < o.weights.size(); ++k) sr.ensemble_weights_mean[k] += o.weights[k] / outputs.size();
    }
    sr.folds.push_back(std::move(o.result));
  }
  sr.metric = eval::task_metric(task, all);
  for (const auto& [name, preds] : members) sr.member_metrics[name] = eval::task_metric(task, preds);
  return sr;
}

}  // namespace

std::vector<call::PendingChunk> list_experiment_chunks(const ExperimentConfig& cfg, const Cohort& cohort) {
  const SeedContext sc{cfg, TaskSpec::of(cfg.task), cohort.origin, 0, nullptr, cfg.method != Method::cl_nontext};
  std::vector<call::PendingChunk> out;
  if (!sc.text_method) return out;
  for (const auto& c : cohort.clients) {
    const UserData u = prepare_user(sc, c, cohort.days);
    auto chunks = call::list_chunks(c.events, u.profile, grouping(sc), cfg.method == Method::fl_text);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

eval::Report run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const TaskSpec task = TaskSpec::of(cfg.task);
  eval::Report report;
  report.method = std::string(to_string(cfg.method));
  report.task = std::string(to_string(cfg.task));
  report.metric_name = task.kind == Task::classification ? "auroc" : "mae";

  std::optional<Cohort> fixed;
  if (!cfg.cohort_path.empty()) fixed = synth::load_cohort(cfg.cohort_path);
  std::optional<EmbeddingStore> store;
  if (cfg.method != Method::cl_nontext && cfg.embedding.kind == EmbeddingKind::file) {
    store = embed::load_embeddings(cfg.embedding.path);
  }

  for (std::uint64_t seed : cfg.seeds) {
    const Cohort cohort = fixed ? *fixed : cohort_for_seed(cfg, seed);
    report.seeds.push_back(run_seed(cfg, task, cohort, seed, store ? &*store : nullptr));
    report.fold_count = report.seeds.back().folds.size();
  }

  std::vector<double> values;
  for (const auto& s : report.seeds) values.push_back(s.metric);
  report.overall = eval::summarize(values);
  if (cfg.method == Method::fedtherapist) {
    for (const auto& key : call::canonical_members(cfg.sources)) report.member_names.push_back(to_string(key));
    for (const auto& name : report.member_names) {
      std::vector<double> v;
      for (const auto& s : report.seeds) {
        auto it = s.member_metrics.find(name);
        if (it != s.member_metrics.end()) v.push_back(it->second);
      }
      if (!v.empty()) report.members[name] = eval::summarize(v);
    }
  }
  return report;
}

void write_outputs(const eval::Report& report, const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_file((base / "report.json").string(), eval::report_json(report));
  write_file((base / "report.csv").string(), eval::report_csv(report));
  write_file((base / "summary.csv").string(), eval::summary_csv(report));

  std::string history;
  for (const auto& s : report.seeds) {
    for (std::size_t f = 0; f < s.folds.size(); ++f) {
      for (const auto& h : s.folds[f].history) {
        history += std::to_string(s.seed) + "," + std::to_string(f) + "," + std::to_string(h.round) + "," + h.metric +
                   "," + format_double(h.value) + "\n";
      }
    }
  }
  if (!history.empty()) write_file((base / "history.csv").string(), "seed,fold,round,metric,value\n" + history);

  json manifest;
  manifest["tool"] = "contextfed";
  manifest["version"] = 1;
  manifest["config"] = to_json(cfg);
  manifest["seeds"] = cfg.seeds;
  manifest["fold_count"] = report.fold_count;
  manifest["outputs"] = {"report.json", "report.csv", "summary.csv"};
  if (!history.empty()) manifest["outputs"].push_back("history.csv");
  write_file((base / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace contextfed
