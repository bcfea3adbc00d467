#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridflow/autodiff.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/rng.hpp"
#include "gridflow/tensor.hpp"

namespace gridflow {

enum class Arch { GCN, GAT, SAGE, GraphConv };

inline const char* to_string(Arch a) {
  switch (a) {
    case Arch::GCN: return "gcn";
    case Arch::GAT: return "gat";
    case Arch::SAGE: return "sage";
    case Arch::GraphConv: return "graphconv";
  }
  return "?";
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "gcn") return Arch::GCN;
  if (s == "gat") return Arch::GAT;
  if (s == "sage") return Arch::SAGE;
  if (s == "graphconv") return Arch::GraphConv;
  throw std::invalid_argument("unknown architecture: " + s);
}

struct GnnConfig {
  Arch arch = Arch::GCN;
  int in_features = 7;
  std::vector<int> layer_sizes = {12, 12};
  int fc_hidden = 128;
  int n_bus = 0;
  double dropout = 0.2;
  int gat_heads = 1;
  double leaky_slope = 0.2;

  int out_size() const { return 2 * n_bus; }
};

// Per-graph edge bookkeeping shared by all layer families.
struct GraphTopology {
  int n = 0;
  std::vector<int> src, dst;            // bidirectional, no self-loops
  std::vector<int> src_loop, dst_loop;  // with self-loops appended
  std::vector<double> gcn_coeff;        // 1/sqrt(deg^ i * deg^ j) per loop-edge
  std::vector<double> inv_deg;          // 1/|N(i)|, 0 for isolated nodes
};

inline GraphTopology make_topology(const EdgeIndex& edges, int n) {
  GraphTopology g;
  g.n = n;
  std::vector<int> deg(n, 0);
  for (auto [s, d] : edges.pairs) {
    g.src.push_back(s);
    g.dst.push_back(d);
    ++deg[d];
  }
  g.src_loop = g.src;
  g.dst_loop = g.dst;
  for (int i = 0; i < n; ++i) {
    g.src_loop.push_back(i);
    g.dst_loop.push_back(i);
  }
  g.inv_deg.resize(n);
  for (int i = 0; i < n; ++i) g.inv_deg[i] = deg[i] ? 1.0 / deg[i] : 0.0;
  g.gcn_coeff.resize(g.src_loop.size());
  for (std::size_t e = 0; e < g.src_loop.size(); ++e)
    g.gcn_coeff[e] = 1.0 / std::sqrt(static_cast<double>(deg[g.src_loop[e]] + 1) *
                                     (deg[g.dst_loop[e]] + 1));
  return g;
}

// B copies of the same graph, node rows offset per copy.
inline GraphTopology replicate_topology(const GraphTopology& g, int copies) {
  GraphTopology out;
  out.n = g.n * copies;
  const auto rep = [&](const std::vector<int>& v, std::vector<int>& to) {
    for (int c = 0; c < copies; ++c)
      for (int x : v) to.push_back(x + c * g.n);
  };
  rep(g.src, out.src);
  rep(g.dst, out.dst);
  rep(g.src_loop, out.src_loop);
  rep(g.dst_loop, out.dst_loop);
  for (int c = 0; c < copies; ++c) {
    out.gcn_coeff.insert(out.gcn_coeff.end(), g.gcn_coeff.begin(), g.gcn_coeff.end());
    out.inv_deg.insert(out.inv_deg.end(), g.inv_deg.begin(), g.inv_deg.end());
  }
  return out;
}

namespace ad {

// constant per-row scaling (coefficients carry no gradient)
inline int row_scale_const(Tape& t, int a, const std::vector<double>& s) {
  const Tensor& A = t.value(a);
  require_shape(s.size() == static_cast<std::size_t>(A.rows()), "row_scale_const");
  Tensor C = A;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) C.at(i, j) *= s[i];
  return t.push(std::move(C), [a, s](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (int i = 0; i < dC.rows(); ++i)
      for (int j = 0; j < dC.cols(); ++j) dA.at(i, j) += dC.at(i, j) * s[i];
  });
}

}  // namespace ad

// H' = D^-1/2 (A+I) D^-1/2 H W
inline int gcn_forward(Tape& t, int h, const GraphTopology& g, int w) {
  const int hw = ad::matmul(t, h, w);
  const int msgs = ad::gather_rows(t, hw, g.src_loop);
  const int scaled = ad::row_scale_const(t, msgs, g.gcn_coeff);
  return ad::segment_sum(t, scaled, g.dst_loop, g.n);
}

// attention over N(i) u {i}: e_ij = LeakyReLU(a^T [W h_i || W h_j])
inline int gat_forward(Tape& t, int h, const GraphTopology& g, int w, int attn,
                       double slope = 0.2) {
  const int hw = ad::matmul(t, h, w);
  const int self_rows = ad::gather_rows(t, hw, g.dst_loop);
  const int neigh_rows = ad::gather_rows(t, hw, g.src_loop);
  const int pairs = ad::concat_cols(t, self_rows, neigh_rows);
  const int logits = ad::leaky_relu(t, ad::matmul(t, pairs, attn), slope);
  const int alpha = ad::segment_softmax(t, logits, g.dst_loop, g.n);
  const int weighted = ad::row_scale(t, neigh_rows, alpha);
  return ad::segment_sum(t, weighted, g.dst_loop, g.n);
}

// h'_i = W_self h_i + W_neigh mean_{j in N(i)} h_j
inline int sage_forward(Tape& t, int h, const GraphTopology& g, int w_self,
                        int w_neigh) {
  const int neigh = ad::gather_rows(t, h, g.src);
  const int summed = ad::segment_sum(t, neigh, g.dst, g.n);
  const int mean = ad::row_scale_const(t, summed, g.inv_deg);
  return ad::add(t, ad::matmul(t, h, w_self), ad::matmul(t, mean, w_neigh));
}

// h'_i = W1 h_i + W2 sum_{j in N(i)} h_j
inline int graphconv_forward(Tape& t, int h, const GraphTopology& g, int w1,
                             int w2) {
  const int neigh = ad::gather_rows(t, h, g.src);
  const int summed = ad::segment_sum(t, neigh, g.dst, g.n);
  return ad::add(t, ad::matmul(t, h, w1), ad::matmul(t, summed, w2));
}

struct LayerParams {
  Tensor w;     // GCN/GAT weight; SAGE self weight; GraphConv self weight
  Tensor w2;    // SAGE neighbor / GraphConv neighbor weight
  Tensor attn;  // GAT attention vector, 2*out x 1
  Tensor bn_gamma, bn_beta;
  ad::BatchNormStats bn_stats;
};

struct ModelParams {
  GnnConfig cfg;
  std::vector<LayerParams> layers;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;

  bool uses_dual_weights() const {
    return cfg.arch == Arch::SAGE || cfg.arch == Arch::GraphConv;
  }

  // Fixed order shared by the optimizer, checkpoints and gradient checks.
  std::vector<Tensor*> trainable() {
    std::vector<Tensor*> out;
    for (LayerParams& l : layers) {
      out.push_back(&l.w);
      if (uses_dual_weights()) out.push_back(&l.w2);
      if (cfg.arch == Arch::GAT) out.push_back(&l.attn);
      out.push_back(&l.bn_gamma);
      out.push_back(&l.bn_beta);
    }
    out.push_back(&fc1_w);
    out.push_back(&fc1_b);
    out.push_back(&fc2_w);
    out.push_back(&fc2_b);
    return out;
  }
};

inline Tensor glorot(Rng& rng, int fan_in, int fan_out, std::vector<int> shape) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

inline ModelParams init_params(Rng& rng, const GnnConfig& cfg) {
  if (cfg.n_bus <= 0) throw std::invalid_argument("init_params: n_bus not set");
  ModelParams p;
  p.cfg = cfg;
  int in = cfg.in_features;
  for (int out : cfg.layer_sizes) {
    LayerParams l;
    l.w = glorot(rng, in, out, {in, out});
    if (cfg.arch == Arch::SAGE || cfg.arch == Arch::GraphConv)
      l.w2 = glorot(rng, in, out, {in, out});
    if (cfg.arch == Arch::GAT) l.attn = glorot(rng, 2 * out, 1, {2 * out, 1});
    l.bn_gamma = Tensor{1, out};
    for (double& v : l.bn_gamma.data) v = 1.0;
    l.bn_beta = Tensor{1, out};
    l.bn_stats = ad::BatchNormStats(out);
    p.layers.push_back(std::move(l));
    in = out;
  }
  const int flat = cfg.n_bus * cfg.layer_sizes.back();
  p.fc1_w = glorot(rng, flat, cfg.fc_hidden, {flat, cfg.fc_hidden});
  p.fc1_b = Tensor{1, cfg.fc_hidden};
  p.fc2_w = glorot(rng, cfg.fc_hidden, cfg.out_size(),
                   {cfg.fc_hidden, cfg.out_size()});
  p.fc2_b = Tensor{1, cfg.out_size()};
  return p;
}

// Tape-side handles for one forward pass, same order as trainable().
struct TapeParams {
  std::vector<int> ids;
};

inline TapeParams push_params(Tape& t, ModelParams& p) {
  TapeParams tp;
  for (Tensor* w : p.trainable()) tp.ids.push_back(t.leaf(*w));
  return tp;
}

// Forward for a batch of `copies` graphs stacked row-wise (copies*n_bus x 7).
// Output is copies x 2*n_bus: [v_1..v_n, delta_1..delta_n] per row, in
// normalized units.
inline int model_forward_batch(Tape& t, int x, const GraphTopology& batched,
                               ModelParams& p, const TapeParams& tp, int copies,
                               bool train, Rng& rng) {
  const GnnConfig& cfg = p.cfg;
  if (batched.n != copies * cfg.n_bus)
    throw std::invalid_argument("model_forward: node count mismatch");
  int k = 0;
  int h = x;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const int w = tp.ids[k++];
    int w2 = -1, attn = -1;
    if (p.uses_dual_weights()) w2 = tp.ids[k++];
    if (cfg.arch == Arch::GAT) attn = tp.ids[k++];
    const int gamma = tp.ids[k++];
    const int beta = tp.ids[k++];
    switch (cfg.arch) {
      case Arch::GCN: h = gcn_forward(t, h, batched, w); break;
      case Arch::GAT: h = gat_forward(t, h, batched, w, attn, cfg.leaky_slope); break;
      case Arch::SAGE: h = sage_forward(t, h, batched, w, w2); break;
      case Arch::GraphConv: h = graphconv_forward(t, h, batched, w, w2); break;
    }
    h = ad::batch_norm(t, h, gamma, beta, p.layers[li].bn_stats, train);
    h = ad::relu(t, h);
    if (li == 0) h = ad::dropout(t, h, cfg.dropout, train, rng);
  }
  const int fc1_w = tp.ids[k++];
  const int fc1_b = tp.ids[k++];
  const int fc2_w = tp.ids[k++];
  const int fc2_b = tp.ids[k++];
  const int flat =
      ad::reshape(t, h, {copies, cfg.n_bus * cfg.layer_sizes.back()});
  const int z = ad::relu(t, ad::add(t, ad::matmul(t, flat, fc1_w), fc1_b));
  return ad::add(t, ad::matmul(t, z, fc2_w), fc2_b);
}

// Single-sample forward; eval mode is deterministic (running batch-norm
// stats, dropout off).
inline Tensor model_forward(const Tensor& features, const GraphTopology& topo,
                            ModelParams& p, bool train = false,
                            std::uint64_t dropout_seed = 0) {
  if (features.rows() != p.cfg.n_bus)
    throw std::invalid_argument("model_forward: node count mismatch");
  Tape t;
  Rng rng(dropout_seed);
  const TapeParams tp = push_params(t, p);
  const int x = t.leaf(features);
  const int out = model_forward_batch(t, x, topo, p, tp, 1, train, rng);
  return t.value(out);
}

}  // namespace gridflow
