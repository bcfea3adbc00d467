#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gridflow/training.hpp"

using namespace gridflow;

namespace {

GraphTopology pair_topo() {
  EdgeIndex e;
  e.pairs = {{0, 1}, {1, 0}};
  return make_topology(e, 2);
}

// learnable synthetic task on a 2 bus graph: targets are a fixed linear
// blend of the injection columns
Dataset synth(int n_samples, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.n_bus = 2;
  for (int s = 0; s < n_samples; ++s) {
    Sample sm;
    sm.x = Tensor{2, 7};
    for (int i = 0; i < 2; ++i) {
      for (int c = 0; c < 4; ++c) sm.x.at(i, c) = rng.uniform(-1.0, 1.0);
      sm.x.at(i, 4 + i) = 1.0;
    }
    sm.y = Tensor{1, 4};
    for (int i = 0; i < 2; ++i) {
      sm.y.at(0, i) = 0.7 * sm.x.at(i, 0) - 0.3 * sm.x.at(1 - i, 1);
      sm.y.at(0, 2 + i) = 0.2 * sm.x.at(i, 1) + 0.5 * sm.x.at(i, 2);
    }
    ds.samples.push_back(sm);
  }
  return ds;
}

GnnConfig synth_config() {
  GnnConfig cfg;
  cfg.n_bus = 2;
  cfg.layer_sizes = {4};
  cfg.fc_hidden = 8;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("first adam step moves each weight by about lr times sign(g)") {
  Tensor w{2, 2};
  w.data = {1.0, -2.0, 0.5, 3.0};
  Tensor g{2, 2};
  g.data = {0.8, -1.3, 2.0, -0.4};
  const Tensor before = w;
  AdamState st;
  adam_step({&w}, {g}, st, 0.01, 0.0);
  for (int i = 0; i < 4; ++i) {
    const double want = before.data[i] - 0.01 * (g.data[i] > 0 ? 1.0 : -1.0);
    REQUIRE(w.data[i] == Catch::Approx(want).margin(1e-6));
  }
}

TEST_CASE("zero gradients leave parameters untouched") {
  Tensor w{1, 3};
  w.data = {1.0, 2.0, 3.0};
  const Tensor before = w;
  AdamState st;
  adam_step({&w}, {Tensor{1, 3}}, st, 0.1, 0.0);
  REQUIRE(w.data == before.data);
}

TEST_CASE("adam converges towards the quadratic minimum") {
  // f(w) = (w-3)^2 from w=0, lr=0.1, 100 steps
  Tensor w{1, 1};
  AdamState st;
  for (int i = 0; i < 100; ++i) {
    Tensor g{1, 1};
    g.data[0] = 2.0 * (w.data[0] - 3.0);
    adam_step({&w}, {g}, st, 0.1, 0.0);
  }
  REQUIRE(w.data[0] == Catch::Approx(2.9806554375278123).epsilon(1e-12));
  REQUIRE(std::abs(w.data[0] - 3.0) < 0.5);
}

TEST_CASE("l2 term pulls weights towards zero even with zero gradient") {
  Tensor w{1, 1};
  w.data[0] = 5.0;
  AdamState st;
  adam_step({&w}, {Tensor{1, 1}}, st, 0.01, 1e-2);
  REQUIRE(w.data[0] < 5.0);
}

TEST_CASE("adam rejects mismatched parameter and gradient counts") {
  Tensor w{1, 1};
  AdamState st;
  REQUIRE_THROWS_AS(adam_step({&w}, {}, st, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("exp decay multiplies lr by 0.9 every tenth epoch") {
  LrSchedulerState st{5e-5};
  for (int e = 1; e <= 9; ++e)
    REQUIRE(lr_update(Scheduler::ExpDecay, st, e, 1.0) == 5e-5);
  REQUIRE(lr_update(Scheduler::ExpDecay, st, 10, 1.0) ==
          Catch::Approx(4.5e-5).epsilon(1e-14));
  for (int e = 11; e <= 19; ++e)
    REQUIRE(lr_update(Scheduler::ExpDecay, st, e, 1.0) ==
            Catch::Approx(4.5e-5).epsilon(1e-14));
  REQUIRE(lr_update(Scheduler::ExpDecay, st, 20, 1.0) ==
          Catch::Approx(4.05e-5).epsilon(1e-14));
}

TEST_CASE("plateau scheduler halves after ten stale epochs") {
  LrSchedulerState st{1e-3};
  REQUIRE(lr_update(Scheduler::PlateauReduce, st, 1, 1.0) == 1e-3);
  // a real improvement resets the stall counter
  REQUIRE(lr_update(Scheduler::PlateauReduce, st, 2, 0.5) == 1e-3);
  for (int e = 3; e <= 11; ++e)  // 9 stale epochs, not enough yet
    REQUIRE(lr_update(Scheduler::PlateauReduce, st, e, 0.5) == 1e-3);
  REQUIRE(lr_update(Scheduler::PlateauReduce, st, 12, 0.5) == 5e-4);
  // improvements below the 1e-6 threshold still count as stale
  LrSchedulerState tiny{1e-3};
  lr_update(Scheduler::PlateauReduce, tiny, 1, 1.0);
  for (int e = 2; e <= 11; ++e)
    lr_update(Scheduler::PlateauReduce, tiny, e, 1.0 - e * 1e-8);
  REQUIRE(tiny.lr == 5e-4);
}

TEST_CASE("training is deterministic under the seed") {
  const Dataset tr = synth(24, 1), va = synth(8, 2);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  cfg.batch_size = 8;
  cfg.seed = 9;
  const TrainResult a = train(synth_config(), pair_topo(), tr, va, cfg);
  const TrainResult b = train(synth_config(), pair_topo(), tr, va, cfg);
  REQUIRE(a.history.epochs.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) {
    REQUIRE(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
    REQUIRE(a.history.epochs[e].val_loss == b.history.epochs[e].val_loss);
  }
  REQUIRE(a.history.best_val_loss == b.history.best_val_loss);
  ModelParams ba = a.best, bb = b.best;
  const std::vector<Tensor*> wa = ba.trainable(), wb = bb.trainable();
  for (std::size_t i = 0; i < wa.size(); ++i)
    REQUIRE(wa[i]->data == wb[i]->data);
}

TEST_CASE("training reduces the loss on a learnable task") {
  const Dataset tr = synth(48, 3), va = synth(16, 4);
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.max_epochs = 40;
  cfg.patience = 40;
  cfg.batch_size = 16;
  cfg.seed = 5;
  const TrainResult r = train(synth_config(), pair_topo(), tr, va, cfg);
  const TrainHistory& h = r.history;
  REQUIRE(h.epochs.back().train_loss < 0.5 * h.epochs.front().train_loss);
  REQUIRE(h.best_val_loss < h.epochs.front().val_loss);
  // the checkpoint really is the argmin of the recorded validation curve
  double min_val = h.epochs.front().val_loss;
  int min_epoch = 1;
  for (const EpochRecord& e : h.epochs)
    if (e.val_loss < min_val) {
      min_val = e.val_loss;
      min_epoch = e.epoch;
    }
  REQUIRE(h.best_val_loss == min_val);
  REQUIRE(h.best_epoch == min_epoch);
  ModelParams best = r.best;
  REQUIRE(evaluate_loss(best, pair_topo(), va, r.stats, 16) ==
          Catch::Approx(min_val).margin(1e-12));
}

TEST_CASE("early stopping fires when validation stops improving") {
  const Dataset tr = synth(8, 6), va = synth(4, 7);
  TrainConfig cfg;
  cfg.lr = 1e-300;  // updates underflow, so the val loss is frozen
  cfg.max_epochs = 50;
  cfg.patience = 1;
  cfg.seed = 11;
  const TrainResult r = train(synth_config(), pair_topo(), tr, va, cfg);
  REQUIRE(r.history.stop_reason == "early_stopping");
  REQUIRE(r.history.epochs.size() == 2);
  REQUIRE(r.history.best_epoch == 1);
}

TEST_CASE("runs that exhaust the budget report max_epochs") {
  const Dataset tr = synth(8, 8), va = synth(4, 9);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  const TrainResult r = train(synth_config(), pair_topo(), tr, va, cfg);
  REQUIRE(r.history.stop_reason == "max_epochs");
  REQUIRE(r.history.epochs.size() == 3);
}

TEST_CASE("history csv has one row per epoch") {
  const Dataset tr = synth(8, 10), va = synth(4, 11);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.patience = 4;
  const TrainResult r = train(synth_config(), pair_topo(), tr, va, cfg);
  const std::string csv = r.history.to_csv();
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 5);
  REQUIRE(csv.rfind("epoch,train_loss,val_loss,lr\n1,", 0) == 0);
}

TEST_CASE("evaluate_loss does not depend on the batch split") {
  const Dataset va = synth(13, 12);
  Rng rng(derive_seed(0, 0x1));
  GnnConfig mc = synth_config();
  ModelParams p = init_params(rng, mc);
  const NormStats st = compute_norm_stats(va);
  const double a = evaluate_loss(p, pair_topo(), va, st, 3);
  const double b = evaluate_loss(p, pair_topo(), va, st, 13);
  REQUIRE(a == Catch::Approx(b).margin(1e-12));
}

TEST_CASE("train validates its inputs") {
  const Dataset tr = synth(8, 13), va = synth(4, 14);
  TrainConfig cfg;
  REQUIRE_THROWS_AS(train(synth_config(), pair_topo(), Dataset{}, va, cfg),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(train(synth_config(), pair_topo(), tr, Dataset{}, cfg),
                    std::invalid_argument);
  GnnConfig wrong = synth_config();
  wrong.n_bus = 3;
  REQUIRE_THROWS_AS(train(wrong, pair_topo(), tr, va, cfg),
                    std::invalid_argument);
  TrainConfig impatient;
  impatient.max_epochs = 5;
  impatient.patience = 6;
  REQUIRE_THROWS_AS(train(synth_config(), pair_topo(), tr, va, impatient),
                    std::invalid_argument);
}
