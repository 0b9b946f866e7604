#include <cmath>

#include "contextfed/error.hpp"
#include "contextfed/fl.hpp"
#include "contextfed/rng.hpp"
#include "doctest.h"
#include "fl_oracles.hpp"

using namespace contextfed;

TEST_CASE("aggregate examples") {
  const std::vector<RoundUpdate> two = {{0, 1, {0.0}}, {1, 3, {4.0}}};
  CHECK(fl::aggregate(two) == std::vector<double>{3.0});

  const std::vector<RoundUpdate> eq = {{0, 2, {1.0, 2.0}}, {1, 2, {3.0, 6.0}}};
  CHECK(fl::aggregate(eq) == std::vector<double>{2.0, 4.0});

  CHECK_THROWS_AS(fl::aggregate(std::vector<RoundUpdate>{}), Error);
  const std::vector<RoundUpdate> bad = {{0, 1, {1.0}}, {1, 1, {1.0, 2.0}}};
  CHECK_THROWS_AS(fl::aggregate(bad), Error);
}

TEST_CASE("aggregate matches the compensated weighted-mean oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto updates = oracle::random_updates(rng);
    const auto got = fl::aggregate(updates);
    const auto want = oracle::weighted_mean(updates);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-12);
  }
}

TEST_CASE("aggregate is scale consistent and reproduces identical updates") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto updates = oracle::random_updates(rng);
    const auto base = fl::aggregate(updates);
    const std::uint64_t k = 1 + rng.below(50);
    for (auto& u : updates) u.n *= k;
    CHECK(fl::aggregate(updates) == base);

    for (auto& u : updates) u.params = updates.front().params;
    CHECK(fl::aggregate(updates) == updates.front().params);
  }
}

TEST_CASE("aggregate sums in client order regardless of input order") {
  Rng rng(3);
  auto updates = oracle::random_updates(rng);
  const auto base = fl::aggregate(updates);
  std::reverse(updates.begin(), updates.end());
  CHECK(fl::aggregate(updates) == base);
}

TEST_CASE("sample_clients") {
  Rng rng(4);
  CHECK(fl::sample_clients(5, 5, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  Rng a(9), b(9);
  CHECK(fl::sample_clients(5, 1, a) == fl::sample_clients(5, 1, b));
  CHECK_THROWS_AS(fl::sample_clients(3, 4, rng), Error);
  for (int i = 0; i < 100; ++i) {
    const auto s = fl::sample_clients(20, 7, rng);
    CHECK(s.size() == 7);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(s.back() < 20);
  }
}

TEST_CASE("single-client draws are uniform within 3 sigma") {
  Rng rng(5);
  const int draws = 40000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[fl::sample_clients(4, 1, rng).front()];
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - draws * 0.25) <= 3 * sigma);
}

TEST_CASE("local_update") {
  Rng rng(6);
  std::vector<std::vector<Sample>> clients = {{{{1.0, -1.0}, 1.0}}, {{{0.5, 0.5}, 0.0}, {{2.0, 0.0}, 1.0}}};
  LinearTrainer trainer(clients, Task::classification);
  const std::vector<double> global = {0.1, -0.2, 0.05};
  TrainConfig tc{0.1, 10, 0.0, 1, 0, {}};

  const auto none = fl::local_update(global, trainer, 1, 0, tc, 77, 3);
  CHECK(none.params == global);
  CHECK(none.n == 2);
  CHECK(none.client_id == 1);

  // A single-sample client trains one SGD step per epoch.
  const auto one = fl::local_update(global, trainer, 0, 1, tc, 77, 3);
  LinearModel m = model::unflatten(global, Task::classification);
  const auto g = model::grad(m, clients[0]);
  for (std::size_t k = 0; k < 2; ++k) m.weights[k] -= 0.1 * g.weights[k];
  m.bias -= 0.1 * g.bias;
  CHECK(one.params == model::flatten(m));

  CHECK(fl::local_update(global, trainer, 1, 3, tc, 77, 3).params ==
        fl::local_update(global, trainer, 1, 3, tc, 77, 3).params);
}

TEST_CASE("run_rounds with one client equals centralized SGD") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = oracle::random_degenerate_config(rng);
    const auto data = oracle::random_samples(rng, cfg.dim, cfg.samples, cfg.task);
    const bool same = oracle::fl_equals_centralized(cfg, data);
    CHECK(same);
  }
}

TEST_CASE("run_rounds edge cases and determinism") {
  Rng rng(8);
  std::vector<std::vector<Sample>> clients;
  for (int c = 0; c < 6; ++c) clients.push_back(oracle::random_samples(rng, 3, 1 + rng.below(6), Task::regression));
  clients.push_back({});  // never sampled
  LinearTrainer trainer(clients, Task::regression);
  const std::vector<double> init = {0.5, 0.5, 0.5, 0.5};

  FLConfig cfg;
  cfg.rounds = 0;
  CHECK(fl::run_rounds(cfg, trainer, init).global_params == init);

  cfg.rounds = 12;
  cfg.clients_per_round = 3;
  cfg.local_epochs = 2;
  cfg.rng_seed = 44;
  int calls = 0;
  const fl::EvalHook hook = [&](int round, std::span<const double> p, std::vector<RoundRecord>& h) {
    ++calls;
    h.push_back({round, "p0", p[0]});
  };
  const auto a = fl::run_rounds(cfg, trainer, init, hook);
  const auto b = fl::run_rounds(cfg, trainer, init, hook);
  CHECK(calls == 24);
  CHECK(a.round_index == 12);
  CHECK(a.global_params == b.global_params);
  REQUIRE(a.history.size() == 12);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].value == b.history[i].value);
  CHECK(fl::history_csv(a.history).rfind("round,metric,value\n1,p0,", 0) == 0);

  cfg.clients_per_round = 7;
  CHECK_THROWS_AS(fl::run_rounds(cfg, trainer, init), Error);
  cfg.clients_per_round = 0;
  cfg.total_clients = 3;
  CHECK_THROWS_AS(fl::run_rounds(cfg, trainer, init), Error);
}

TEST_CASE("ensemble trainer round trips through the flat layout") {
  auto layout = EnsembleModel::for_sources({Source::keyboard}, 2, Task::classification, EnsembleMode::E_E);
  std::vector<ContextSample> samples;
  Rng rng(10);
  for (int i = 0; i < 8; ++i) {
    for (const auto& k : layout.keys) {
      samples.push_back({k, {rng.normal(), rng.normal()}, static_cast<double>(i % 2), "u" + std::to_string(i), 0});
    }
  }
  EnsembleTrainer trainer(layout, {call::index_samples(layout, samples)});
  TrainConfig tc{0.05, 4, 0.0, 2, 31, {}};
  const auto params = trainer.train(call::flatten(layout), 0, tc);
  const auto direct = call::train_call_local(layout, samples, tc);
  CHECK(params == call::flatten(direct));
}
