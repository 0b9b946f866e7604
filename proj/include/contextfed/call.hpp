#pragma once

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "contextfed/context.hpp"
#include "contextfed/embed.hpp"
#include "contextfed/model.hpp"

namespace contextfed {

/// One context model's identity: which text source and which context.
struct MemberKey {
  Source source = Source::keyboard;
  ContextLabel label = ContextLabel::T_D;
  auto operator<=>(const MemberKey&) const = default;
};
std::string to_string(const MemberKey& k);

enum class EnsembleMode { E_A, E_E };
enum class LongInputMode { full_pool, single };
enum class Granularity { per_day, per_period };

std::string_view to_string(EnsembleMode m);
std::string_view to_string(LongInputMode m);
EnsembleMode parse_ensemble_mode(std::string_view s);
LongInputMode parse_long_input_mode(std::string_view s);

/// Context models plus ensemble weights W over them. Members are stored in
/// canonical order (speech before keyboard, labels in declaration order).
struct EnsembleModel {
  std::vector<MemberKey> keys;
  std::vector<LinearModel> members;
  std::vector<double> weights;  // W, on the probability simplex
  EnsembleMode mode = EnsembleMode::E_A;
  Task task = Task::classification;

  /// All members for the given sources (N = 6, 8 or 14), zero-initialised,
  /// W uniform.
  static EnsembleModel for_sources(const std::set<Source>& sources, std::size_t dim, Task task, EnsembleMode mode);
  /// Arbitrary member list, sorted into canonical order.
  static EnsembleModel with_members(std::vector<MemberKey> keys, std::size_t dim, Task task, EnsembleMode mode);

  std::size_t size() const { return keys.size(); }
  std::optional<std::size_t> index_of(const MemberKey& k) const;
  /// 1/N for E_A, W for E_E.
  std::vector<double> effective_weights() const;
};

/// Text of one (user, period, member) group after long-input handling.
struct ContextSample {
  MemberKey member;
  EmbeddingVector x;
  double label = 0.0;
  std::string user_id;
  int period = 0;
};

/// Same, for models that see all of a user's text at once.
struct PeriodSample {
  EmbeddingVector x;
  double label = 0.0;
  std::string user_id;
  int period = 0;
};

namespace call {

/// Canonical member list for a source set.
std::vector<MemberKey> canonical_members(const std::set<Source>& sources);

/// 6 for speech, 8 for keyboard, 14 for both.
std::size_t count_members(const std::set<Source>& sources);

struct GroupingOptions {
  Granularity granularity = Granularity::per_period;
  LongInputMode mode = LongInputMode::full_pool;
  std::size_t chunk_size = embed::kDefaultChunkSize;
  /// UTC midnight of study day 0; per-day periods count local days from it.
  Timestamp origin = 0;
  std::set<Source> sources = {Source::speech, Source::keyboard};
};

/// Label lookup by period; groups whose period has no label are skipped.
using LabelFn = std::function<std::optional<double>(int period)>;

/// Stable id of one embedded chunk, e.g. "u07|p3|keyboard:T_N|c0".
std::string sample_id(const std::string& user_id, int period, const std::string& group, std::size_t chunk);

/// A chunk awaiting embedding, with its id.
struct PendingChunk {
  std::string sample_id;
  TokenList tokens;
};

/// Every chunk the grouping would embed for this user: context groups when
/// `pooled` is false, whole-period groups otherwise.
std::vector<PendingChunk> list_chunks(const std::vector<TextEvent>& events, const UserProfile& profile,
                                      const GroupingOptions& opt, bool pooled);

/// Groups one user's events by (period, source, context label): each event
/// feeds every label it carries. Group text is concatenated in timestamp
/// order, chunked, embedded, then max-pooled (full_pool) or kept per chunk
/// (single).
std::vector<ContextSample> build_context_datasets(const std::vector<TextEvent>& events, const UserProfile& profile,
                                                  const GroupingOptions& opt, const embed::Embedder& embedder,
                                                  const LabelFn& label_of);

/// As above with all selected sources pooled into one group per period.
std::vector<PeriodSample> build_pooled_dataset(const std::vector<TextEvent>& events, const UserProfile& profile,
                                               const GroupingOptions& opt, const embed::Embedder& embedder,
                                               const LabelFn& label_of);

/// Member score over one or more chunk vectors: the task transform of the
/// mean chunk logit. An empty list scores the zero vector (bias only).
double member_score(const LinearModel& m, std::span<const EmbeddingVector> chunks);

/// Scores of every member, in canonical order. Members absent from
/// `inputs` score their bias alone. Throws Error("no context data") when
/// no member has input.
std::vector<double> member_scores(const EnsembleModel& ens,
                                  const std::map<MemberKey, std::vector<EmbeddingVector>>& inputs);

/// Weighted sum of member scores under the effective weights.
double combine(const EnsembleModel& ens, std::span<const double> scores);

double ensemble_predict(const EnsembleModel& ens, const std::map<MemberKey, EmbeddingVector>& inputs);
double ensemble_predict(const EnsembleModel& ens, const std::map<MemberKey, std::vector<EmbeddingVector>>& inputs);

/// Euclidean projection onto {w >= 0, sum w = 1}.
std::vector<double> project_to_simplex(std::span<const double> v);

/// Samples indexed for repeated local training.
struct CallDataset {
  std::vector<std::vector<Sample>> per_member;
  struct Group {
    std::string user_id;
    int period = 0;
    double label = 0.0;
    /// Per member, indices into per_member[m] of this group's chunks.
    std::vector<std::vector<std::size_t>> chunks;
  };
  std::vector<Group> groups;
  std::size_t sample_count = 0;
};

/// Samples whose member is not part of `layout` are ignored.
CallDataset index_samples(const EnsembleModel& layout, std::span<const ContextSample> samples);

/// Each member trains cfg.epochs epochs on its own samples (a private
/// generator seeded with cfg.rng_seed). In E_E mode W then takes cfg.epochs
/// passes of projected SGD on the ensemble loss with members held fixed.
EnsembleModel train_call_local(EnsembleModel ens, const CallDataset& data, const TrainConfig& cfg);
EnsembleModel train_call_local(EnsembleModel ens, std::span<const ContextSample> samples, const TrainConfig& cfg);

/// Ensemble loss of one group under fixed member scores.
double ensemble_loss(Task task, std::span<const double> weights, std::span<const double> scores, double label,
                     ClassWeights cw = {});

/// Layout: each member's weights then bias, in canonical order, then W.
std::vector<double> flatten(const EnsembleModel& ens);
EnsembleModel unflatten(const EnsembleModel& layout, std::span<const double> params);

std::string to_json(const EnsembleModel& ens);
EnsembleModel from_json(const std::string& text);

}  // namespace call
}  // namespace contextfed
