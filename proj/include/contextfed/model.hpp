#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "contextfed/embed.hpp"
#include "contextfed/rng.hpp"
#include "contextfed/types.hpp"

namespace contextfed {

/// Linear head: score = w.x + b, passed through a sigmoid for classification.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  Task task = Task::classification;

  static LinearModel zeros(std::size_t dim, Task task);
  std::size_t dim() const { return weights.size(); }
  bool operator==(const LinearModel&) const = default;
};

/// Per-class multipliers on the classification loss. Regression ignores them.
struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 10;
  double l1_lambda = 0.0;  // regression only
  int epochs = 1;
  std::uint64_t rng_seed = 0;
  ClassWeights class_weights;
};

/// One training example. Classification labels are 0/1; regression labels
/// are on the 0-100 report scale and are divided by 100 inside the loss.
struct Sample {
  EmbeddingVector x;
  double y = 0.0;
};

namespace model {

double sigmoid(double z);

/// w.x + b. Throws Error on dimension mismatch.
double predict_logit(const LinearModel& m, std::span<const double> x);

/// Sigmoid of the logit for classification, the raw logit for regression.
double predict_score(const LinearModel& m, std::span<const double> x);
double score_from_logit(Task task, double logit);

/// Maps a model score onto the label scale: probabilities pass through,
/// regression scores are multiplied by 100 and clamped to [0, 100].
double to_report_scale(Task task, double score);
double clamp_report(double value);

/// Regression training target for a 0-100 label.
inline double regression_target(double label) { return label / 100.0; }

struct Gradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Mean loss over the batch: weighted binary cross-entropy on sigmoid
/// scores, or squared error of the logit against label/100. No L1 term.
double loss(const LinearModel& m, std::span<const Sample> batch, ClassWeights cw = {});

/// Analytic gradient of `loss`. Throws Error on an empty batch.
Gradient grad(const LinearModel& m, std::span<const Sample> batch, ClassWeights cw = {});

/// Soft-threshold every weight (never the bias) by `threshold`.
void proximal_l1(LinearModel& m, double threshold);

/// One pass over `samples` in an order shuffled by `rng`, mini-batches of
/// cfg.batch_size (the trailing partial batch is used). Regression applies
/// the L1 proximal step after each batch.
void sgd_epoch(LinearModel& m, std::span<const Sample> samples, const TrainConfig& cfg, Rng& rng);

/// Single epoch with a generator seeded from cfg.rng_seed.
LinearModel sgd_epoch(LinearModel m, std::span<const Sample> samples, const TrainConfig& cfg);

/// cfg.epochs epochs sharing one generator seeded from cfg.rng_seed.
LinearModel train_epochs(LinearModel m, std::span<const Sample> samples, const TrainConfig& cfg);

/// Fraction of correct 0.5-threshold decisions (classification only).
double accuracy(const LinearModel& m, std::span<const Sample> samples);

/// {"task":...,"bias":...,"weights":[...]} with 17-digit decimals.
std::string to_json(const LinearModel& m);
LinearModel from_json(const std::string& text);

/// Flat layout used by the FL engine: weights followed by bias.
std::vector<double> flatten(const LinearModel& m);
LinearModel unflatten(std::span<const double> params, Task task);

}  // namespace model
}  // namespace contextfed
