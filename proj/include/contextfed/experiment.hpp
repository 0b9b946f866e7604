#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "contextfed/call.hpp"
#include "contextfed/eval.hpp"
#include "contextfed/fl.hpp"
#include "contextfed/synth.hpp"

namespace contextfed {

enum class Method { cl_nontext, fl_text, fedtherapist };
enum class EmbeddingKind { hash, tfidf, file };
enum class FoldMode { louo, louo_with_validation };

std::string_view to_string(Method m);
std::string_view to_string(EmbeddingKind k);
std::string_view to_string(FoldMode m);

struct EmbeddingConfig {
  EmbeddingKind kind = EmbeddingKind::hash;
  int dim = embed::kDefaultDim;
  std::uint64_t seed = 7;
  std::size_t vocab_size = 1000;  // tfidf
  int ngram_min = 1;
  int ngram_max = 3;
  std::string path;  // file
};

struct ExperimentConfig {
  Method method = Method::fedtherapist;
  std::set<Source> sources = {Source::speech, Source::keyboard};
  TaskName task = TaskName::depression;
  EnsembleMode ensemble_mode = EnsembleMode::E_E;
  LongInputMode long_input = LongInputMode::full_pool;
  std::size_t chunk_size = embed::kDefaultChunkSize;
  EmbeddingConfig embedding;
  /// FL settings; rng_seed is replaced per (seed, fold).
  FLConfig fl;
  /// Centralized settings for the non-text baseline; train.epochs is the
  /// epoch count.
  TrainConfig cl{0.01, 10, 0.0, 1000, 0, {}};
  /// Generated cohort (rng_seed is mixed with each experiment seed) unless
  /// cohort_path names a cohort file, which is then used for every seed.
  CohortSpec cohort;
  std::string cohort_path;
  std::vector<std::uint64_t> seeds = {17, 42, 1009};
  FoldMode fold_mode = FoldMode::louo;
  std::size_t validation_users = 5;
  /// Inverse-frequency class weights from the training fold.
  bool balance_classes = true;
  /// Text methods: z-score each embedding dimension (per context model)
  /// with statistics of the fold's training users.
  bool standardize_features = false;
  /// Record training loss every k rounds (0: never).
  int history_every = 0;
  /// Fold workers; 0 uses the hardware concurrency.
  unsigned threads = 0;
  std::string output_dir;
};

/// Throws Error("config: <field>: <reason>") on unknown keys, bad values,
/// or violated invariants.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

/// Checks cross-field invariants; throws Error citing the first violation.
void validate(const ExperimentConfig& cfg);

/// Every field, defaults included.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// The cohort used for experiment seed `seed`.
Cohort cohort_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Training seeds for fold `fold` under experiment seed `seed`.
std::uint64_t cl_seed(std::uint64_t seed, std::size_t fold);
std::uint64_t fl_seed(std::uint64_t seed, std::size_t fold);

/// Every chunk the run would embed for `cohort` (context groups for
/// fedtherapist, whole periods for fl_text), with the ids file-embedding
/// mode looks up.
std::vector<call::PendingChunk> list_experiment_chunks(const ExperimentConfig& cfg, const Cohort& cohort);

/// Runs every seed and LOUO fold.
eval::Report run_experiment(const ExperimentConfig& cfg);

/// Writes report.json, report.csv, summary.csv, manifest.json and, when
/// history was recorded, history.csv into `dir` (created if needed).
void write_outputs(const eval::Report& report, const ExperimentConfig& cfg, const std::string& dir);

}  // namespace contextfed
