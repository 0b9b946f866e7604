#include "contextfed/call.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"
#include "contextfed/rng.hpp"
#include "json.hpp"

namespace contextfed {

std::string to_string(const MemberKey& k) {
  return std::string(to_string(k.source)) + ":" + std::string(to_string(k.label));
}

std::string_view to_string(EnsembleMode m) { return m == EnsembleMode::E_A ? "E_A" : "E_E"; }
std::string_view to_string(LongInputMode m) { return m == LongInputMode::full_pool ? "full_pool" : "single"; }

EnsembleMode parse_ensemble_mode(std::string_view s) {
  if (s == "E_A") return EnsembleMode::E_A;
  if (s == "E_E") return EnsembleMode::E_E;
  throw Error("unknown ensemble mode: " + std::string(s));
}

LongInputMode parse_long_input_mode(std::string_view s) {
  if (s == "full_pool") return LongInputMode::full_pool;
  if (s == "single") return LongInputMode::single;
  throw Error("unknown long-input mode: " + std::string(s));
}

EnsembleModel EnsembleModel::with_members(std::vector<MemberKey> keys, std::size_t dim, Task task,
                                          EnsembleMode mode) {
  if (keys.empty()) throw Error("ensemble needs at least one member");
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) throw Error("duplicate ensemble member");
  EnsembleModel ens;
  ens.keys = std::move(keys);
  ens.members.assign(ens.keys.size(), LinearModel::zeros(dim, task));
  ens.weights.assign(ens.keys.size(), 1.0 / static_cast<double>(ens.keys.size()));
  ens.mode = mode;
  ens.task = task;
  return ens;
}

EnsembleModel EnsembleModel::for_sources(const std::set<Source>& sources, std::size_t dim, Task task,
                                         EnsembleMode mode) {
  return with_members(call::canonical_members(sources), dim, task, mode);
}

std::optional<std::size_t> EnsembleModel::index_of(const MemberKey& k) const {
  auto it = std::lower_bound(keys.begin(), keys.end(), k);
  if (it == keys.end() || *it != k) return std::nullopt;
  return static_cast<std::size_t>(it - keys.begin());
}

std::vector<double> EnsembleModel::effective_weights() const {
  if (mode == EnsembleMode::E_A) return std::vector<double>(size(), 1.0 / static_cast<double>(size()));
  return weights;
}

namespace call {

std::vector<MemberKey> canonical_members(const std::set<Source>& sources) {
  std::vector<MemberKey> keys;
  for (Source s : {Source::speech, Source::keyboard}) {
    if (!sources.count(s)) continue;
    for (ContextLabel c : kAllContextLabels) {
      const bool app_family = c == ContextLabel::A_C || c == ContextLabel::A_O;
      if (s == Source::speech && app_family) continue;
      keys.push_back({s, c});
    }
  }
  return keys;
}

std::size_t count_members(const std::set<Source>& sources) { return canonical_members(sources).size(); }

std::string sample_id(const std::string& user_id, int period, const std::string& group, std::size_t chunk) {
  return user_id + "|p" + std::to_string(period) + "|" + group + "|c" + std::to_string(chunk);
}

namespace {

constexpr const char* kPooledGroup = "all";

struct GroupKey {
  int period;
  std::optional<MemberKey> member;  // empty for pooled groups
  auto operator<=>(const GroupKey&) const = default;
};

using Groups = std::map<GroupKey, std::vector<const TextEvent*>>;

Groups group_events(const std::vector<TextEvent>& events, const UserProfile& profile, const GroupingOptions& opt,
                    bool pooled) {
  Groups groups;
  for (const TextEvent& e : events) {
    if (!opt.sources.count(e.source)) continue;
    const int period = opt.granularity == Granularity::per_period
                           ? 0
                           : context::local_day_index(e.timestamp, profile.utc_offset_minutes, opt.origin);
    if (pooled) {
      groups[{period, std::nullopt}].push_back(&e);
      continue;
    }
    for (ContextLabel c : context::assign_contexts(e, profile)) groups[{period, MemberKey{e.source, c}}].push_back(&e);
  }
  for (auto& [k, list] : groups) {
    std::stable_sort(list.begin(), list.end(),
                     [](const TextEvent* a, const TextEvent* b) { return a->timestamp < b->timestamp; });
  }
  return groups;
}

TokenList concat(const std::vector<const TextEvent*>& list) {
  TokenList tokens;
  for (const TextEvent* e : list) tokens.insert(tokens.end(), e->tokens.begin(), e->tokens.end());
  return tokens;
}

std::string group_name(const GroupKey& k) { return k.member ? to_string(*k.member) : kPooledGroup; }

// Embeds one group's chunks and applies long-input handling.
std::vector<EmbeddingVector> embed_group(const std::string& user_id, const GroupKey& key, const TokenList& tokens,
                                         const GroupingOptions& opt, const embed::Embedder& embedder) {
  const auto chunks = embed::chunk_tokens(tokens, opt.chunk_size);
  std::vector<EmbeddingVector> vectors;
  vectors.reserve(chunks.size());
  const std::string name = group_name(key);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    vectors.push_back(embedder.embed(chunks[c], sample_id(user_id, key.period, name, c)));
  }
  if (opt.mode == LongInputMode::full_pool && !vectors.empty()) return {embed::pool_max(vectors)};
  return vectors;
}

const std::string& user_of(const std::vector<TextEvent>& events) {
  static const std::string empty;
  return events.empty() ? empty : events.front().user_id;
}

}  // namespace

std::vector<PendingChunk> list_chunks(const std::vector<TextEvent>& events, const UserProfile& profile,
                                      const GroupingOptions& opt, bool pooled) {
  std::vector<PendingChunk> out;
  for (const auto& [key, list] : group_events(events, profile, opt, pooled)) {
    auto chunks = embed::chunk_tokens(concat(list), opt.chunk_size);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      out.push_back({sample_id(user_of(events), key.period, group_name(key), c), std::move(chunks[c])});
    }
  }
  return out;
}

std::vector<ContextSample> build_context_datasets(const std::vector<TextEvent>& events, const UserProfile& profile,
                                                  const GroupingOptions& opt, const embed::Embedder& embedder,
                                                  const LabelFn& label_of) {
  std::vector<ContextSample> out;
  const std::string& user = user_of(events);
  for (const auto& [key, list] : group_events(events, profile, opt, false)) {
    const auto label = label_of(key.period);
    if (!label) continue;
    for (auto& x : embed_group(user, key, concat(list), opt, embedder)) {
      out.push_back({*key.member, std::move(x), *label, user, key.period});
    }
  }
  return out;
}

std::vector<PeriodSample> build_pooled_dataset(const std::vector<TextEvent>& events, const UserProfile& profile,
                                               const GroupingOptions& opt, const embed::Embedder& embedder,
                                               const LabelFn& label_of) {
  std::vector<PeriodSample> out;
  const std::string& user = user_of(events);
  for (const auto& [key, list] : group_events(events, profile, opt, true)) {
    const auto label = label_of(key.period);
    if (!label) continue;
    for (auto& x : embed_group(user, key, concat(list), opt, embedder)) {
      out.push_back({std::move(x), *label, user, key.period});
    }
  }
  return out;
}

double member_score(const LinearModel& m, std::span<const EmbeddingVector> chunks) {
  if (chunks.empty()) return model::score_from_logit(m.task, m.bias);
  double sum = 0.0;
  for (const auto& x : chunks) sum += model::predict_logit(m, x);
  return model::score_from_logit(m.task, sum / static_cast<double>(chunks.size()));
}

std::vector<double> member_scores(const EnsembleModel& ens,
                                  const std::map<MemberKey, std::vector<EmbeddingVector>>& inputs) {
  std::vector<double> scores(ens.size());
  bool any = false;
  for (std::size_t m = 0; m < ens.size(); ++m) {
    auto it = inputs.find(ens.keys[m]);
    if (it != inputs.end() && !it->second.empty()) {
      any = true;
      scores[m] = member_score(ens.members[m], it->second);
    } else {
      scores[m] = member_score(ens.members[m], {});
    }
  }
  if (!any) throw Error("no context data");
  return scores;
}

double combine(const EnsembleModel& ens, std::span<const double> scores) {
  const auto w = ens.effective_weights();
  double out = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) out += w[m] * scores[m];
  return out;
}

double ensemble_predict(const EnsembleModel& ens, const std::map<MemberKey, std::vector<EmbeddingVector>>& inputs) {
  return combine(ens, member_scores(ens, inputs));
}

double ensemble_predict(const EnsembleModel& ens, const std::map<MemberKey, EmbeddingVector>& inputs) {
  std::map<MemberKey, std::vector<EmbeddingVector>> chunked;
  for (const auto& [k, v] : inputs) chunked[k].push_back(v);
  return ensemble_predict(ens, chunked);
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) return {};
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(0.0, v[i] - theta);
  return w;
}

CallDataset index_samples(const EnsembleModel& layout, std::span<const ContextSample> samples) {
  CallDataset data;
  data.per_member.resize(layout.size());
  std::map<std::pair<std::string, int>, std::size_t> group_index;
  for (const ContextSample& s : samples) {
    const auto m = layout.index_of(s.member);
    if (!m) continue;
    auto [it, inserted] = group_index.try_emplace({s.user_id, s.period}, data.groups.size());
    if (inserted) {
      CallDataset::Group g;
      g.user_id = s.user_id;
      g.period = s.period;
      g.label = s.label;
      g.chunks.resize(layout.size());
      data.groups.push_back(std::move(g));
    }
    data.groups[it->second].chunks[*m].push_back(data.per_member[*m].size());
    data.per_member[*m].push_back({s.x, s.label});
    ++data.sample_count;
  }
  return data;
}

double ensemble_loss(Task task, std::span<const double> weights, std::span<const double> scores, double label,
                     ClassWeights cw) {
  double p = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) p += weights[m] * scores[m];
  if (task == Task::classification) {
    constexpr double kEps = 1e-12;
    p = std::clamp(p, kEps, 1.0 - kEps);
    const double w = label > 0.5 ? cw.positive : cw.negative;
    return -w * (label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  }
  const double r = p - model::regression_target(label);
  return r * r;
}

namespace {

// d(ensemble_loss)/dW for one group.
void add_weight_gradient(Task task, std::span<const double> weights, std::span<const double> scores, double label,
                         ClassWeights cw, std::vector<double>& g) {
  double p = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) p += weights[m] * scores[m];
  double c;
  if (task == Task::classification) {
    constexpr double kEps = 1e-12;
    p = std::clamp(p, kEps, 1.0 - kEps);
    const double w = label > 0.5 ? cw.positive : cw.negative;
    c = w * (p - label) / (p * (1.0 - p));
  } else {
    c = 2.0 * (p - model::regression_target(label));
  }
  for (std::size_t m = 0; m < g.size(); ++m) g[m] += c * scores[m];
}

constexpr std::uint64_t kWeightPhaseStream = 0x57;

}  // namespace

EnsembleModel train_call_local(EnsembleModel ens, const CallDataset& data, const TrainConfig& cfg) {
  if (data.per_member.size() != ens.size()) throw Error("dataset was indexed for a different ensemble layout");
  for (std::size_t m = 0; m < ens.size(); ++m) {
    if (data.per_member[m].empty()) continue;
    ens.members[m] = model::train_epochs(std::move(ens.members[m]), data.per_member[m], cfg);
  }
  if (ens.mode != EnsembleMode::E_E || data.groups.empty() || cfg.epochs <= 0) return ens;

  // Member scores are fixed during the weight phase.
  std::vector<std::vector<double>> scores(data.groups.size(), std::vector<double>(ens.size()));
  std::vector<EmbeddingVector> chunk_buf;
  for (std::size_t gi = 0; gi < data.groups.size(); ++gi) {
    const auto& g = data.groups[gi];
    for (std::size_t m = 0; m < ens.size(); ++m) {
      const auto& members = ens.members[m];
      if (g.chunks[m].empty()) {
        scores[gi][m] = member_score(members, {});
        continue;
      }
      double sum = 0.0;
      for (std::size_t k : g.chunks[m]) sum += model::predict_logit(members, data.per_member[m][k].x);
      scores[gi][m] = model::score_from_logit(ens.task, sum / static_cast<double>(g.chunks[m].size()));
    }
  }

  Rng rng(derive_seed(cfg.rng_seed, kWeightPhaseStream));
  std::vector<std::size_t> order(data.groups.size());
  std::vector<double> g(ens.size());
  std::vector<double> step(ens.size());
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t gi = order[k];
        add_weight_gradient(ens.task, ens.weights, scores[gi], data.groups[gi].label, cfg.class_weights, g);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t m = 0; m < ens.size(); ++m) step[m] = ens.weights[m] - cfg.learning_rate * g[m] * inv;
      ens.weights = project_to_simplex(step);
    }
  }
  return ens;
}

EnsembleModel train_call_local(EnsembleModel ens, std::span<const ContextSample> samples, const TrainConfig& cfg) {
  const CallDataset data = index_samples(ens, samples);
  return train_call_local(std::move(ens), data, cfg);
}

std::vector<double> flatten(const EnsembleModel& ens) {
  std::vector<double> p;
  const std::size_t dim = ens.members.empty() ? 0 : ens.members.front().dim();
  p.reserve(ens.size() * (dim + 2));
  for (const auto& m : ens.members) {
    p.insert(p.end(), m.weights.begin(), m.weights.end());
    p.push_back(m.bias);
  }
  p.insert(p.end(), ens.weights.begin(), ens.weights.end());
  return p;
}

EnsembleModel unflatten(const EnsembleModel& layout, std::span<const double> params) {
  EnsembleModel ens = layout;
  std::size_t pos = 0;
  std::size_t expected = ens.size();
  for (const auto& m : ens.members) expected += m.dim() + 1;
  if (params.size() != expected) throw Error("parameter vector does not match ensemble layout");
  for (auto& m : ens.members) {
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(pos),
              params.begin() + static_cast<std::ptrdiff_t>(pos + m.dim()), m.weights.begin());
    pos += m.dim();
    m.bias = params[pos++];
  }
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(pos), params.end(), ens.weights.begin());
  return ens;
}

std::string to_json(const EnsembleModel& ens) {
  std::string out = "{\"mode\":" + quote_json(to_string(ens.mode)) + ",\"task\":" + quote_json(to_string(ens.task)) +
                    ",\"members\":[";
  for (std::size_t m = 0; m < ens.size(); ++m) {
    if (m) out += ',';
    out += "{\"source\":" + quote_json(to_string(ens.keys[m].source)) +
           ",\"context\":" + quote_json(to_string(ens.keys[m].label)) + ",\"model\":" + model::to_json(ens.members[m]) +
           "}";
  }
  out += "],\"W\":" + format_vector(ens.weights) + "}";
  return out;
}

EnsembleModel from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed ensemble checkpoint: ") + e.what());
  }
  EnsembleModel ens;
  ens.mode = parse_ensemble_mode(j.value("mode", ""));
  const std::string task = j.value("task", "");
  ens.task = task == "regression" ? Task::regression : Task::classification;
  for (const auto& m : j.at("members")) {
    ens.keys.push_back({parse_source(m.at("source").get<std::string>()),
                        parse_context_label(m.at("context").get<std::string>())});
    ens.members.push_back(model::from_json(m.at("model").dump()));
  }
  ens.weights = j.at("W").get<std::vector<double>>();
  if (ens.weights.size() != ens.keys.size()) throw Error("ensemble checkpoint W does not match member count");
  return ens;
}

}  // namespace call
}  // namespace contextfed
