#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contextfed/fl.hpp"
#include "contextfed/types.hpp"

namespace contextfed {

enum class TaskName { depression, stress, anxiety, mood };

/// Depression is the one classification task and is predicted once per
/// user from the whole study window; the others are per-day regressions.
struct TaskSpec {
  TaskName name = TaskName::depression;
  Task kind = Task::classification;
  bool per_day = false;

  static TaskSpec of(TaskName name);
};

std::string_view to_string(TaskName t);
TaskName parse_task_name(std::string_view s);

namespace eval {

inline constexpr int kPhq9Threshold = 5;

/// 1 iff score >= 5. Throws Error outside [0, 27].
int binarize_phq9(int score);

/// P(score+ > score-) + 0.5 P(tie), from midranks. Throws
/// Error("undefined AUROC") unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

double mae(std::span<const double> preds, std::span<const double> labels);

struct Fold {
  std::string test_user;
  std::vector<std::string> train_users;
  std::vector<std::string> validation_users;
};

/// One fold per user, training on all others. Throws Error with < 2 users.
std::vector<Fold> louo_folds(const std::vector<std::string>& user_ids);

/// As louo_folds, but the `v` users following the test user (cyclically)
/// are held out as validation and excluded from training.
std::vector<Fold> louo_with_validation(const std::vector<std::string>& user_ids, std::size_t v = 5);

struct Prediction {
  std::string user_id;
  int period = 0;
  double value = 0.0;  // probability, or 0-100 for regression
  double label = 0.0;
};

struct FoldResult {
  std::string test_user;
  std::vector<Prediction> predictions;
  /// Per context model, keyed by member name (e.g. "keyboard:T_N").
  std::map<std::string, std::vector<Prediction>> member_predictions;
  /// Present for regression tasks.
  std::optional<double> metric;
  /// Metric over the fold's validation users, when there are any.
  std::optional<double> validation_metric;
  std::vector<RoundRecord> history;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  double metric = 0.0;
  std::map<std::string, double> member_metrics;
  std::vector<double> ensemble_weights_mean;  // E_E only: W averaged over folds
  std::vector<std::string> skipped;           // "user|pN" groups without text
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across seeds
};

Summary summarize(std::span<const double> values);

struct Report {
  std::string method;
  std::string task;
  std::string metric_name;  // "auroc" or "mae"
  std::vector<std::string> member_names;
  std::vector<SeedResult> seeds;
  Summary overall;
  std::map<std::string, Summary> members;
  std::size_t fold_count = 0;
};

/// AUROC over 0/1 labels or MAE, depending on the task.
double task_metric(const TaskSpec& task, const std::vector<Prediction>& preds);

std::string report_json(const Report& r);
std::string report_csv(const Report& r);
std::string summary_csv(const Report& r);

}  // namespace eval
}  // namespace contextfed
