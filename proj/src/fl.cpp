#include "contextfed/fl.hpp"

#include <algorithm>
#include <numeric>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"

namespace contextfed {

std::vector<double> LinearTrainer::train(std::span<const double> global, std::size_t client,
                                         const TrainConfig& cfg) const {
  LinearModel m = model::unflatten(global, task_);
  m = model::train_epochs(std::move(m), clients_.at(client), cfg);
  return model::flatten(m);
}

std::vector<double> EnsembleTrainer::train(std::span<const double> global, std::size_t client,
                                           const TrainConfig& cfg) const {
  EnsembleModel ens = call::unflatten(layout_, global);
  ens = call::train_call_local(std::move(ens), clients_.at(client), cfg);
  return call::flatten(ens);
}

namespace fl {
namespace {
constexpr std::uint64_t kSamplingStream = 0x5a3b1e;
}

std::uint64_t client_seed(std::uint64_t rng_seed, int round, std::size_t client_id) {
  return derive_seed(rng_seed, static_cast<std::uint64_t>(round), client_id);
}

std::vector<std::size_t> sample_clients(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw Error("cannot sample " + std::to_string(k) + " clients out of " + std::to_string(n));
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

RoundUpdate local_update(std::span<const double> global, const LocalTrainer& trainer, std::size_t client,
                         int epochs, const TrainConfig& train, std::uint64_t rng_seed, int round) {
  const std::uint64_t n = trainer.sample_count(client);
  if (n == 0) throw Error("client " + std::to_string(client) + " has no data");
  TrainConfig cfg = train;
  cfg.epochs = epochs;
  cfg.rng_seed = client_seed(rng_seed, round, client);
  RoundUpdate u{client, n, {}};
  if (epochs <= 0) {
    u.params.assign(global.begin(), global.end());
  } else {
    u.params = trainer.train(global, client, cfg);
  }
  return u;
}

std::vector<double> aggregate(std::span<const RoundUpdate> updates) {
  if (updates.empty()) throw Error("no updates to aggregate");
  std::vector<const RoundUpdate*> sorted;
  sorted.reserve(updates.size());
  std::uint64_t total = 0;
  for (const auto& u : updates) {
    if (u.n == 0) throw Error("update from client " + std::to_string(u.client_id) + " has zero data size");
    if (u.params.size() != updates.front().params.size()) throw Error("updates have mismatched dimensions");
    sorted.push_back(&u);
    total += u.n;
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const RoundUpdate* a, const RoundUpdate* b) { return a->client_id < b->client_id; });

  const std::vector<double>& ref = sorted.front()->params;
  std::vector<double> out = ref;
  const double n = static_cast<double>(total);
  for (const RoundUpdate* u : sorted) {
    const double frac = static_cast<double>(u->n) / n;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += frac * (u->params[j] - ref[j]);
  }
  return out;
}

ServerState run_rounds(const FLConfig& cfg, const LocalTrainer& trainer, std::vector<double> initial,
                       const EvalHook& eval_hook) {
  if (cfg.total_clients != 0 && cfg.total_clients != trainer.num_clients()) {
    throw Error("FL config expects " + std::to_string(cfg.total_clients) + " clients, trainer holds " +
                std::to_string(trainer.num_clients()));
  }
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < trainer.num_clients(); ++c) {
    if (trainer.sample_count(c) > 0) eligible.push_back(c);
  }

  ServerState state{0, std::move(initial), {}};
  if (cfg.rounds <= 0) return state;
  if (eligible.empty()) throw Error("no client has training data");
  const std::size_t k = cfg.clients_per_round == 0 ? eligible.size() : cfg.clients_per_round;
  if (k > eligible.size()) {
    throw Error("clients_per_round " + std::to_string(k) + " exceeds the " + std::to_string(eligible.size()) +
                " clients with data");
  }

  std::vector<RoundUpdate> updates;
  for (int r = 0; r < cfg.rounds; ++r) {
    Rng sampler(derive_seed(cfg.rng_seed, kSamplingStream, static_cast<std::uint64_t>(r)));
    const auto picked = sample_clients(eligible.size(), k, sampler);
    updates.clear();
    for (std::size_t idx : picked) {
      updates.push_back(
          local_update(state.global_params, trainer, eligible[idx], cfg.local_epochs, cfg.train, cfg.rng_seed, r));
    }
    state.global_params = aggregate(updates);
    state.round_index = r + 1;
    if (eval_hook) eval_hook(state.round_index, state.global_params, state.history);
  }
  return state;
}

std::string history_csv(const std::vector<RoundRecord>& history) {
  std::string out = "round,metric,value\n";
  for (const auto& h : history) out += std::to_string(h.round) + "," + h.metric + "," + format_double(h.value) + "\n";
  return out;
}

}  // namespace fl
}  // namespace contextfed
