#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "contextfed/call.hpp"
#include "contextfed/model.hpp"
#include "contextfed/rng.hpp"

namespace contextfed {

struct FLConfig {
  /// Expected number of clients; 0 accepts whatever the trainer holds.
  std::size_t total_clients = 0;
  /// Clients sampled per round; 0 means every eligible client.
  std::size_t clients_per_round = 0;
  int local_epochs = 1;
  int rounds = 1000;
  TrainConfig train;
  std::uint64_t rng_seed = 0;
};

/// A client's model after local training, flattened.
struct RoundUpdate {
  std::size_t client_id = 0;
  std::uint64_t n = 0;  // client data size, at least 1
  std::vector<double> params;
};

struct RoundRecord {
  int round = 0;
  std::string metric;
  double value = 0.0;
};

struct ServerState {
  int round_index = 0;  // completed rounds
  std::vector<double> global_params;
  std::vector<RoundRecord> history;
};

/// Client-side training for one model family. Implementations are
/// immutable and may be called concurrently for distinct clients.
class LocalTrainer {
 public:
  virtual ~LocalTrainer() = default;
  virtual std::size_t num_clients() const = 0;
  virtual std::uint64_t sample_count(std::size_t client) const = 0;
  /// Loads `global` into a client model and trains cfg.epochs epochs.
  virtual std::vector<double> train(std::span<const double> global, std::size_t client,
                                    const TrainConfig& cfg) const = 0;
};

/// One LinearModel per client dataset.
class LinearTrainer final : public LocalTrainer {
 public:
  LinearTrainer(std::vector<std::vector<Sample>> clients, Task task)
      : clients_(std::move(clients)), task_(task) {}
  std::size_t num_clients() const override { return clients_.size(); }
  std::uint64_t sample_count(std::size_t client) const override { return clients_.at(client).size(); }
  std::vector<double> train(std::span<const double> global, std::size_t client,
                            const TrainConfig& cfg) const override;
  const std::vector<Sample>& client(std::size_t i) const { return clients_.at(i); }

 private:
  std::vector<std::vector<Sample>> clients_;
  Task task_;
};

/// A CALL ensemble per client.
class EnsembleTrainer final : public LocalTrainer {
 public:
  EnsembleTrainer(EnsembleModel layout, std::vector<call::CallDataset> clients)
      : layout_(std::move(layout)), clients_(std::move(clients)) {}
  std::size_t num_clients() const override { return clients_.size(); }
  std::uint64_t sample_count(std::size_t client) const override { return clients_.at(client).sample_count; }
  std::vector<double> train(std::span<const double> global, std::size_t client,
                            const TrainConfig& cfg) const override;
  const EnsembleModel& layout() const { return layout_; }

 private:
  EnsembleModel layout_;
  std::vector<call::CallDataset> clients_;
};

namespace fl {

/// Per-client, per-round training seed.
std::uint64_t client_seed(std::uint64_t rng_seed, int round, std::size_t client_id);

/// K distinct ids from [0, N) by partial Fisher-Yates, sorted ascending.
/// Throws Error when K > N.
std::vector<std::size_t> sample_clients(std::size_t n, std::size_t k, Rng& rng);

/// Trains one client from the global parameters for `epochs` epochs using
/// the derived seed for (round, client).
RoundUpdate local_update(std::span<const double> global, const LocalTrainer& trainer, std::size_t client,
                         int epochs, const TrainConfig& train, std::uint64_t rng_seed, int round);

/// Data-size weighted mean, sum_i (n_i / n) params_i, accumulated in
/// ascending client_id order as offsets from the lowest-id update so that
/// identical updates reproduce themselves exactly. Throws Error on an empty
/// list or mismatched dimensions.
std::vector<double> aggregate(std::span<const RoundUpdate> updates);

using EvalHook = std::function<void(int round, std::span<const double> params, std::vector<RoundRecord>& history)>;

/// Synchronous FedAvg: per round sample K eligible clients (those with data),
/// train locally, aggregate, then call `eval_hook` (if set).
ServerState run_rounds(const FLConfig& cfg, const LocalTrainer& trainer, std::vector<double> initial,
                       const EvalHook& eval_hook = {});

/// `round,metric,value` lines with a header.
std::string history_csv(const std::vector<RoundRecord>& history);

}  // namespace fl
}  // namespace contextfed
