#include "contextfed/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"
#include "json.hpp"

namespace contextfed {

LinearModel LinearModel::zeros(std::size_t dim, Task task) {
  return LinearModel{std::vector<double>(dim, 0.0), 0.0, task};
}

namespace model {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sample_weight(const LinearModel& m, double y, ClassWeights cw) {
  if (m.task == Task::regression) return 1.0;
  return y > 0.5 ? cw.positive : cw.negative;
}

// d(loss_i)/d(logit) for one sample.
double dloss_dlogit(const LinearModel& m, double z, double y) {
  if (m.task == Task::classification) return sigmoid(z) - y;
  return 2.0 * (z - regression_target(y));
}

// Accumulates the mean gradient over samples[idx] into g.
void accumulate_grad(const LinearModel& m, std::span<const Sample> samples, std::span<const std::size_t> idx,
                     ClassWeights cw, Gradient& g) {
  std::fill(g.weights.begin(), g.weights.end(), 0.0);
  g.bias = 0.0;
  for (std::size_t k : idx) {
    const Sample& s = samples[k];
    const double z = predict_logit(m, s.x);
    const double c = sample_weight(m, s.y, cw) * dloss_dlogit(m, z, s.y);
    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += c * s.x[i];
    g.bias += c;
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (double& v : g.weights) v *= inv;
  g.bias *= inv;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double predict_logit(const LinearModel& m, std::span<const double> x) {
  if (x.size() != m.weights.size()) {
    throw Error("dimension mismatch: model has " + std::to_string(m.weights.size()) + ", input has " +
                std::to_string(x.size()));
  }
  return dot(m.weights, x) + m.bias;
}

double score_from_logit(Task task, double logit) { return task == Task::classification ? sigmoid(logit) : logit; }

double predict_score(const LinearModel& m, std::span<const double> x) {
  return score_from_logit(m.task, predict_logit(m, x));
}

double clamp_report(double value) { return std::clamp(value, 0.0, 100.0); }

double to_report_scale(Task task, double score) {
  return task == Task::classification ? score : clamp_report(100.0 * score);
}

double loss(const LinearModel& m, std::span<const Sample> batch, ClassWeights cw) {
  if (batch.empty()) throw Error("empty batch");
  double total = 0.0;
  for (const Sample& s : batch) {
    const double z = predict_logit(m, s.x);
    double l;
    if (m.task == Task::classification) {
      // -y log sigma(z) - (1-y) log(1 - sigma(z))
      l = s.y * softplus(-z) + (1.0 - s.y) * softplus(z);
    } else {
      const double r = z - regression_target(s.y);
      l = r * r;
    }
    total += sample_weight(m, s.y, cw) * l;
  }
  return total / static_cast<double>(batch.size());
}

Gradient grad(const LinearModel& m, std::span<const Sample> batch, ClassWeights cw) {
  if (batch.empty()) throw Error("empty batch");
  Gradient g{std::vector<double>(m.dim(), 0.0), 0.0};
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  accumulate_grad(m, batch, idx, cw, g);
  return g;
}

void proximal_l1(LinearModel& m, double threshold) {
  for (double& w : m.weights) {
    const double mag = std::abs(w) - threshold;
    w = mag > 0.0 ? std::copysign(mag, w) : 0.0;
  }
}

void sgd_epoch(LinearModel& m, std::span<const Sample> samples, const TrainConfig& cfg, Rng& rng) {
  if (samples.empty()) return;
  if (cfg.batch_size < 1) throw Error("batch size must be at least 1");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  const bool prox = m.task == Task::regression && cfg.l1_lambda > 0.0;
  Gradient g{std::vector<double>(m.dim(), 0.0), 0.0};
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    accumulate_grad(m, samples, std::span<const std::size_t>(order).subspan(start, end - start), cfg.class_weights,
                    g);
    for (std::size_t i = 0; i < m.weights.size(); ++i) m.weights[i] -= cfg.learning_rate * g.weights[i];
    m.bias -= cfg.learning_rate * g.bias;
    if (prox) proximal_l1(m, cfg.learning_rate * cfg.l1_lambda);
  }
}

LinearModel sgd_epoch(LinearModel m, std::span<const Sample> samples, const TrainConfig& cfg) {
  Rng rng(cfg.rng_seed);
  sgd_epoch(m, samples, cfg, rng);
  return m;
}

LinearModel train_epochs(LinearModel m, std::span<const Sample> samples, const TrainConfig& cfg) {
  Rng rng(cfg.rng_seed);
  for (int e = 0; e < cfg.epochs; ++e) sgd_epoch(m, samples, cfg, rng);
  return m;
}

double accuracy(const LinearModel& m, std::span<const Sample> samples) {
  if (samples.empty()) throw Error("no samples");
  std::size_t correct = 0;
  for (const Sample& s : samples) {
    const bool pred = predict_score(m, s.x) >= 0.5;
    if (pred == (s.y > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::string to_json(const LinearModel& m) {
  return "{\"task\":" + quote_json(to_string(m.task)) + ",\"bias\":" + format_double(m.bias) +
         ",\"weights\":" + format_vector(m.weights) + "}";
}

LinearModel from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
  LinearModel m;
  const std::string task = j.value("task", "");
  if (task == "classification") m.task = Task::classification;
  else if (task == "regression") m.task = Task::regression;
  else throw Error("model checkpoint has unknown task: " + task);
  if (!j.contains("bias") || !j.contains("weights")) throw Error("model checkpoint lacks bias or weights");
  m.bias = j["bias"].get<double>();
  m.weights = j["weights"].get<std::vector<double>>();
  return m;
}

std::vector<double> flatten(const LinearModel& m) {
  std::vector<double> p(m.weights);
  p.push_back(m.bias);
  return p;
}

LinearModel unflatten(std::span<const double> params, Task task) {
  if (params.empty()) throw Error("empty parameter vector");
  LinearModel m;
  m.task = task;
  m.weights.assign(params.begin(), params.end() - 1);
  m.bias = params.back();
  return m;
}

}  // namespace model
}  // namespace contextfed
