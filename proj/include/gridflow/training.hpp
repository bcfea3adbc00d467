#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridflow/autodiff.hpp"
#include "gridflow/dataset.hpp"
#include "gridflow/gnn.hpp"
#include "gridflow/io.hpp"
#include "gridflow/rng.hpp"

namespace gridflow {

enum class Scheduler { PlateauReduce, ExpDecay };

inline const char* to_string(Scheduler s) {
  return s == Scheduler::PlateauReduce ? "plateau" : "exp_decay";
}

struct TrainConfig {
  double lr = 5e-5;
  double l2_lambda = 1e-6;
  int batch_size = 16;
  int max_epochs = 800;
  int patience = 100;
  Scheduler scheduler = Scheduler::PlateauReduce;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::string stop_reason;

  std::string to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,lr\n";
    for (const EpochRecord& e : epochs)
      out << e.epoch << ',' << fmt_double(e.train_loss) << ','
          << fmt_double(e.val_loss) << ',' << fmt_double(e.lr) << '\n';
    return out.str();
  }
};

// Adam with bias correction; the L2 term enters on the gradient side.
struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline void adam_step(std::vector<Tensor*> params,
                      const std::vector<Tensor>& grads, AdamState& st,
                      double lr, double l2_lambda) {
  if (st.m.empty()) {
    for (Tensor* p : params) {
      st.m.emplace_back(p->shape);
      st.v.emplace_back(p->shape);
    }
  }
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double g = grads[p].data[i] + l2_lambda * w.data[i];
      st.m[p].data[i] = st.beta1 * st.m[p].data[i] + (1.0 - st.beta1) * g;
      st.v[p].data[i] = st.beta2 * st.v[p].data[i] + (1.0 - st.beta2) * g * g;
      const double mhat = st.m[p].data[i] / bc1;
      const double vhat = st.v[p].data[i] / bc2;
      w.data[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

struct LrSchedulerState {
  double lr = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;
};

// PlateauReduce halves after 10 epochs without a 1e-6 improvement;
// ExpDecay multiplies by 0.9 every 10 epochs. Epochs are 1-based.
inline double lr_update(Scheduler sched, LrSchedulerState& st, int epoch,
                        double val_loss) {
  if (sched == Scheduler::ExpDecay) {
    if (epoch >= 10 && epoch % 10 == 0) st.lr *= 0.9;
  } else {
    if (val_loss < st.best_val - 1e-6) {
      st.best_val = val_loss;
      st.stall = 0;
    } else if (++st.stall >= 10) {
      st.lr *= 0.5;
      st.stall = 0;
    }
  }
  return st.lr;
}

struct TrainResult {
  ModelParams best;
  TrainHistory history;
  NormStats stats;
};

namespace detail {

inline Tensor stack_features(const Dataset& ds, const std::vector<int>& idx,
                             const NormStats& st) {
  const int n = ds.n_bus;
  Tensor x{static_cast<int>(idx.size()) * n, 7};
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor xs = normalize_features(ds.samples[idx[b]].x, st);
    std::copy(xs.data.begin(), xs.data.end(),
              x.data.begin() + b * xs.data.size());
  }
  return x;
}

inline Tensor stack_targets(const Dataset& ds, const std::vector<int>& idx,
                            const NormStats& st) {
  const int n = ds.n_bus;
  Tensor y{static_cast<int>(idx.size()), 2 * n};
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor ys = normalize_targets(ds.samples[idx[b]].y, st);
    std::copy(ys.data.begin(), ys.data.end(),
              y.data.begin() + b * ys.data.size());
  }
  return y;
}

// Mean squared error over one normalized batch; fills `grads` (trainable
// order) when training.
inline double batch_pass(ModelParams& params, const GraphTopology& topo,
                         const Dataset& ds, const std::vector<int>& idx,
                         const NormStats& st, bool train, Rng& rng,
                         std::vector<Tensor>* grads) {
  const int copies = static_cast<int>(idx.size());
  const GraphTopology batched =
      copies == 1 ? topo : replicate_topology(topo, copies);
  Tape t;
  const TapeParams tp = push_params(t, params);
  const int x = t.leaf(stack_features(ds, idx, st));
  const int y = t.leaf(stack_targets(ds, idx, st));
  const int out = model_forward_batch(t, x, batched, params, tp, copies, train, rng);
  const int diff = ad::sub(t, out, y);
  const int loss = ad::mean_all(t, ad::mul(t, diff, diff));
  const double loss_value = t.value(loss).data[0];
  if (grads) {
    t.backward(loss);
    grads->clear();
    for (int id : tp.ids) grads->push_back(t.grad(id));
  }
  return loss_value;
}

}  // namespace detail

inline double evaluate_loss(ModelParams& params, const GraphTopology& topo,
                            const Dataset& ds, const NormStats& st,
                            int batch_size) {
  Rng rng(0);
  double total = 0.0;
  int count = 0;
  std::vector<int> idx;
  for (int i = 0; i < ds.size(); i += batch_size) {
    idx.clear();
    for (int j = i; j < std::min(ds.size(), i + batch_size); ++j) idx.push_back(j);
    total += detail::batch_pass(params, topo, ds, idx, st, false, rng, nullptr) *
             idx.size();
    count += static_cast<int>(idx.size());
  }
  return total / count;
}

inline TrainResult train(const GnnConfig& model_cfg, const GraphTopology& topo,
                         const Dataset& train_ds, const Dataset& val_ds,
                         const TrainConfig& cfg) {
  if (train_ds.empty() || val_ds.empty())
    throw std::invalid_argument("train: empty split");
  if (train_ds.n_bus != val_ds.n_bus || train_ds.n_bus != model_cfg.n_bus)
    throw std::invalid_argument("train: datasets disagree on topology size");
  if (cfg.patience > cfg.max_epochs)
    throw std::invalid_argument("train: patience exceeds max_epochs");

  TrainResult res;
  res.stats = compute_norm_stats(train_ds);

  Rng init_rng(derive_seed(cfg.seed, 0x1));
  ModelParams params = init_params(init_rng, model_cfg);
  AdamState adam;
  LrSchedulerState sched{cfg.lr};

  res.best = params;
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order(train_ds.size());
    for (int i = 0; i < train_ds.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x2, epoch));
    shuffle(order, shuffle_rng);

    double train_loss = 0.0;
    std::vector<Tensor> grads;
    int batch_no = 0;
    for (int i = 0; i < train_ds.size(); i += cfg.batch_size, ++batch_no) {
      std::vector<int> idx(order.begin() + i,
                           order.begin() +
                               std::min(train_ds.size(), i + cfg.batch_size));
      Rng drop_rng(derive_seed(cfg.seed, 0x3, epoch, batch_no));
      const double loss = detail::batch_pass(params, topo, train_ds, idx,
                                             res.stats, true, drop_rng, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_no));
      adam_step(params.trainable(), grads, adam, sched.lr, cfg.l2_lambda);
      train_loss += loss * idx.size();
    }
    train_loss /= train_ds.size();

    const double val_loss =
        evaluate_loss(params, topo, val_ds, res.stats, cfg.batch_size);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train: non-finite validation loss at epoch " +
                               std::to_string(epoch));

    res.history.epochs.push_back({epoch, train_loss, val_loss, sched.lr});
    if (val_loss < res.history.best_val_loss) {
      res.history.best_val_loss = val_loss;
      res.history.best_epoch = epoch;
      res.best = params;
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.patience) {
      res.history.stop_reason = "early_stopping";
      break;
    }
    lr_update(cfg.scheduler, sched, epoch, val_loss);
  }
  if (res.history.stop_reason.empty()) res.history.stop_reason = "max_epochs";
  return res;
}

}  // namespace gridflow
