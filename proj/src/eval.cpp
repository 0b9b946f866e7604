#include "contextfed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"

namespace contextfed {

TaskSpec TaskSpec::of(TaskName name) {
  if (name == TaskName::depression) return {name, Task::classification, false};
  return {name, Task::regression, true};
}

std::string_view to_string(TaskName t) {
  switch (t) {
    case TaskName::depression: return "depression";
    case TaskName::stress: return "stress";
    case TaskName::anxiety: return "anxiety";
    case TaskName::mood: return "mood";
  }
  return "?";
}

TaskName parse_task_name(std::string_view s) {
  for (TaskName t : {TaskName::depression, TaskName::stress, TaskName::anxiety, TaskName::mood}) {
    if (to_string(t) == s) return t;
  }
  throw Error("unknown task: " + std::string(s));
}

namespace eval {

int binarize_phq9(int score) {
  if (score < 0 || score > 27) throw Error("PHQ-9 score out of range: " + std::to_string(score));
  return score >= kPhq9Threshold ? 1 : 0;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled midranks keep everything integral: a tie block spanning sorted
  // positions [i, j) has midrank (i + 1 + j) / 2.
  std::vector<std::int64_t> rank_x2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) rank_x2[order[k]] = static_cast<std::int64_t>(i + 1 + j);
    i = j;
  }
  std::int64_t n_pos = 0;
  std::int64_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("AUROC labels must be 0 or 1");
    if (labels[i] == 1) {
      ++n_pos;
      rank_sum_x2 += rank_x2[i];
    }
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("undefined AUROC");
  const std::int64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n_pos * n_neg);
}

double mae(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size()) throw Error("predictions and labels differ in length");
  if (preds.empty()) throw Error("no predictions");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(preds[i] - labels[i]);
  return sum / static_cast<double>(preds.size());
}

std::vector<Fold> louo_folds(const std::vector<std::string>& user_ids) {
  return louo_with_validation(user_ids, 0);
}

std::vector<Fold> louo_with_validation(const std::vector<std::string>& user_ids, std::size_t v) {
  if (user_ids.size() < 2) throw Error("leave-one-user-out needs at least 2 users");
  if (user_ids.size() < v + 2) throw Error("too few users for " + std::to_string(v) + " validation users");
  const std::size_t n = user_ids.size();
  std::vector<Fold> folds;
  folds.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    Fold f;
    f.test_user = user_ids[t];
    std::vector<bool> held(n, false);
    held[t] = true;
    for (std::size_t k = 1; k <= v; ++k) {
      const std::size_t idx = (t + k) % n;
      f.validation_users.push_back(user_ids[idx]);
      held[idx] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!held[i]) f.train_users.push_back(user_ids[i]);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

double task_metric(const TaskSpec& task, const std::vector<Prediction>& preds) {
  std::vector<double> values, labels;
  for (const auto& p : preds) {
    values.push_back(p.value);
    labels.push_back(p.label);
  }
  if (task.kind == Task::regression) return mae(values, labels);
  std::vector<int> bin;
  for (double l : labels) bin.push_back(l > 0.5 ? 1 : 0);
  return auroc(values, bin);
}

namespace {
std::string predictions_json(const std::vector<Prediction>& preds) {
  std::string out = "[";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (i) out += ',';
    out += "{\"user_id\":" + quote_json(preds[i].user_id) + ",\"period\":" + std::to_string(preds[i].period) +
           ",\"prediction\":" + format_double(preds[i].value) + ",\"label\":" + format_double(preds[i].label) + "}";
  }
  return out + "]";
}

std::string summary_json(const Summary& s) {
  return "{\"mean\":" + format_double(s.mean) + ",\"std\":" + format_double(s.std) + "}";
}
}  // namespace

std::string report_json(const Report& r) {
  std::string out = "{\"method\":" + quote_json(r.method) + ",\"task\":" + quote_json(r.task) +
                    ",\"metric\":" + quote_json(r.metric_name) + ",\"fold_count\":" + std::to_string(r.fold_count) +
                    ",\"overall\":" + summary_json(r.overall) + ",\"members\":{";
  bool first = true;
  for (const auto& [name, s] : r.members) {
    if (!first) out += ',';
    first = false;
    out += quote_json(name) + ":" + summary_json(s);
  }
  out += "},\"seeds\":[";
  for (std::size_t si = 0; si < r.seeds.size(); ++si) {
    const SeedResult& sr = r.seeds[si];
    if (si) out += ',';
    out += "{\"seed\":" + std::to_string(sr.seed) + ",\"metric\":" + format_double(sr.metric) + ",\"member_metrics\":{";
    first = true;
    for (const auto& [name, v] : sr.member_metrics) {
      if (!first) out += ',';
      first = false;
      out += quote_json(name) + ":" + format_double(v);
    }
    out += "},\"ensemble_weights_mean\":" + format_vector(sr.ensemble_weights_mean) + ",\"skipped\":[";
    for (std::size_t k = 0; k < sr.skipped.size(); ++k) {
      if (k) out += ',';
      out += quote_json(sr.skipped[k]);
    }
    out += "],\"folds\":[";
    for (std::size_t f = 0; f < sr.folds.size(); ++f) {
      const FoldResult& fr = sr.folds[f];
      if (f) out += ',';
      out += "{\"test_user\":" + quote_json(fr.test_user) + ",\"metric\":" +
             (fr.metric ? format_double(*fr.metric) : std::string("null")) + ",\"validation_metric\":" +
             (fr.validation_metric ? format_double(*fr.validation_metric) : std::string("null")) +
             ",\"predictions\":" + predictions_json(fr.predictions) + "}";
    }
    out += "]}";
  }
  out += "]}\n";
  return out;
}

std::string report_csv(const Report& r) {
  std::string out = "seed,fold,test_user,model,period,prediction,label\n";
  for (const auto& sr : r.seeds) {
    for (std::size_t f = 0; f < sr.folds.size(); ++f) {
      const FoldResult& fr = sr.folds[f];
      auto rows = [&](const std::string& model, const std::vector<Prediction>& preds) {
        for (const auto& p : preds) {
          out += std::to_string(sr.seed) + "," + std::to_string(f) + "," + fr.test_user + "," + model + "," +
                 std::to_string(p.period) + "," + format_double(p.value) + "," + format_double(p.label) + "\n";
        }
      };
      rows(r.method, fr.predictions);
      for (const auto& [name, preds] : fr.member_predictions) rows(name, preds);
    }
  }
  return out;
}

std::string summary_csv(const Report& r) {
  std::string out = "model,seed,metric,value\n";
  for (const auto& sr : r.seeds) {
    out += r.method + "," + std::to_string(sr.seed) + "," + r.metric_name + "," + format_double(sr.metric) + "\n";
    for (const auto& [name, v] : sr.member_metrics) {
      out += name + "," + std::to_string(sr.seed) + "," + r.metric_name + "," + format_double(v) + "\n";
    }
  }
  out += r.method + ",mean," + r.metric_name + "," + format_double(r.overall.mean) + "\n";
  out += r.method + ",std," + r.metric_name + "," + format_double(r.overall.std) + "\n";
  for (const auto& [name, s] : r.members) {
    out += name + ",mean," + r.metric_name + "," + format_double(s.mean) + "\n";
    out += name + ",std," + r.metric_name + "," + format_double(s.std) + "\n";
  }
  return out;
}

}  // namespace eval
}  // namespace contextfed
