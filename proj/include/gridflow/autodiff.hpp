#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gridflow/rng.hpp"
#include "gridflow/tensor.hpp"

namespace gridflow {

// Tape-based reverse mode. The graph is rebuilt every forward pass; nodes are
// identified by push order, which is already a topological order.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  int leaf(Tensor value) {
    nodes_.push_back({std::move(value), {}, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int push(Tensor value, BackFn back) {
    nodes_.push_back({std::move(value), {}, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  Tensor& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  void backward(int loss) {
    if (nodes_[loss].value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    for (Node& n : nodes_) n.grad = {};
    grad(loss).data[0] = 1.0;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.data.empty()) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ad {

inline int matmul(Tape& t, int a, int b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_shape(A.cols() == B.rows(), "matmul");
  const int m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C{m, n};
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) C.at(i, j) += av * B.at(p, j);
    }
  return t.push(std::move(C), [a, b, m, k, n](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    Tensor& dA = t.grad(a);
    Tensor& dB = t.grad(b);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double g = dC.at(i, j);
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          dA.at(i, p) += g * B.at(p, j);
          dB.at(p, j) += g * A.at(i, p);
        }
      }
  });
}

// elementwise add; b may also be a 1 x n row broadcast over a's rows
inline int add(Tape& t, int a, int b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  const bool bcast = !A.same_shape(B);
  if (bcast)
    require_shape(B.rows() == 1 && B.cols() == A.cols(), "add (row broadcast)");
  Tensor C = A;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      C.at(i, j) += bcast ? B.at(0, j) : B.at(i, j);
  return t.push(std::move(C), [a, b, bcast](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    Tensor& dB = t.grad(b);
    for (std::size_t i = 0; i < dC.data.size(); ++i) dA.data[i] += dC.data[i];
    if (bcast) {
      const int cols = dC.cols();
      for (int i = 0; i < dC.rows(); ++i)
        for (int j = 0; j < cols; ++j) dB.at(0, j) += dC.at(i, j);
    } else {
      for (std::size_t i = 0; i < dC.data.size(); ++i) dB.data[i] += dC.data[i];
    }
  });
}

inline int scale(Tape& t, int a, double s) {
  Tensor C = t.value(a);
  for (double& v : C.data) v *= s;
  return t.push(std::move(C), [a, s](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < dC.data.size(); ++i) dA.data[i] += s * dC.data[i];
  });
}

inline int sub(Tape& t, int a, int b) { return add(t, a, scale(t, b, -1.0)); }

inline int mul(Tape& t, int a, int b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_shape(A.same_shape(B), "mul");
  Tensor C = A;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
  return t.push(std::move(C), [a, b](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    Tensor& dA = t.grad(a);
    Tensor& dB = t.grad(b);
    for (std::size_t i = 0; i < dC.data.size(); ++i) {
      dA.data[i] += dC.data[i] * B.data[i];
      dB.data[i] += dC.data[i] * A.data[i];
    }
  });
}

inline int relu(Tape& t, int a) {
  Tensor C = t.value(a);
  for (double& v : C.data) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(C), [a](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    const Tensor& A = t.value(a);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < dC.data.size(); ++i)
      if (A.data[i] > 0.0) dA.data[i] += dC.data[i];
  });
}

inline int leaky_relu(Tape& t, int a, double slope = 0.2) {
  Tensor C = t.value(a);
  for (double& v : C.data) v = v > 0.0 ? v : slope * v;
  return t.push(std::move(C), [a, slope](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    const Tensor& A = t.value(a);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < dC.data.size(); ++i)
      dA.data[i] += dC.data[i] * (A.data[i] > 0.0 ? 1.0 : slope);
  });
}

inline int concat_rows(Tape& t, int a, int b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_shape(A.cols() == B.cols(), "concat_rows");
  Tensor C{A.rows() + B.rows(), A.cols()};
  std::copy(A.data.begin(), A.data.end(), C.data.begin());
  std::copy(B.data.begin(), B.data.end(), C.data.begin() + A.data.size());
  return t.push(std::move(C), [a, b](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    Tensor& dB = t.grad(b);
    for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += dC.data[i];
    for (std::size_t i = 0; i < dB.data.size(); ++i)
      dB.data[i] += dC.data[dA.data.size() + i];
  });
}

inline int concat_cols(Tape& t, int a, int b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_shape(A.rows() == B.rows(), "concat_cols");
  const int m = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor C{m, ca + cb};
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < ca; ++j) C.at(i, j) = A.at(i, j);
    for (int j = 0; j < cb; ++j) C.at(i, ca + j) = B.at(i, j);
  }
  return t.push(std::move(C), [a, b, m, ca, cb](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    Tensor& dB = t.grad(b);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < ca; ++j) dA.at(i, j) += dC.at(i, j);
      for (int j = 0; j < cb; ++j) dB.at(i, j) += dC.at(i, ca + j);
    }
  });
}

inline int reshape(Tape& t, int a, std::vector<int> new_shape) {
  const Tensor& A = t.value(a);
  require_shape(Tensor::count(new_shape) == A.size(), "reshape");
  Tensor C = A;
  C.shape = std::move(new_shape);
  return t.push(std::move(C), [a](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < dC.data.size(); ++i) dA.data[i] += dC.data[i];
  });
}

inline int gather_rows(Tape& t, int a, std::vector<int> idx) {
  const Tensor& A = t.value(a);
  const int cols = A.cols();
  Tensor C{static_cast<int>(idx.size()), cols};
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < cols; ++j)
      C.at(static_cast<int>(i), j) = A.at(idx[i], j);
  return t.push(std::move(C), [a, idx = std::move(idx), cols](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < cols; ++j)
        dA.at(idx[i], j) += dC.at(static_cast<int>(i), j);
  });
}

// out(i, :) = a(i, :) * s[i], with s a length-m vector node
inline int row_scale(Tape& t, int a, int s) {
  const Tensor& A = t.value(a);
  const Tensor& S = t.value(s);
  require_shape(S.size() == A.rows(), "row_scale");
  Tensor C = A;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) C.at(i, j) *= S.data[i];
  return t.push(std::move(C), [a, s](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    const Tensor& A = t.value(a);
    const Tensor& S = t.value(s);
    Tensor& dA = t.grad(a);
    Tensor& dS = t.grad(s);
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) {
        dA.at(i, j) += dC.at(i, j) * S.data[i];
        dS.data[i] += dC.at(i, j) * A.at(i, j);
      }
  });
}

inline int segment_sum(Tape& t, int a, std::vector<int> seg, int n_segments) {
  const Tensor& A = t.value(a);
  require_shape(static_cast<int>(seg.size()) == A.rows(), "segment_sum");
  const int cols = A.cols();
  Tensor C{n_segments, cols};
  for (std::size_t i = 0; i < seg.size(); ++i)
    for (int j = 0; j < cols; ++j)
      C.at(seg[i], j) += A.at(static_cast<int>(i), j);
  return t.push(std::move(C), [a, seg = std::move(seg), cols](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < seg.size(); ++i)
      for (int j = 0; j < cols; ++j)
        dA.at(static_cast<int>(i), j) += dC.at(seg[i], j);
  });
}

// softmax of a length-m logit vector normalized within each segment
inline int segment_softmax(Tape& t, int logits, std::vector<int> seg,
                           int n_segments) {
  const Tensor& L = t.value(logits);
  require_shape(static_cast<int>(seg.size()) == L.size(), "segment_softmax");
  const std::size_t m = seg.size();
  std::vector<double> mx(n_segments, -1e300), denom(n_segments, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    mx[seg[i]] = std::max(mx[seg[i]], L.data[i]);
  Tensor C(L.shape);
  for (std::size_t i = 0; i < m; ++i) {
    C.data[i] = std::exp(L.data[i] - mx[seg[i]]);
    denom[seg[i]] += C.data[i];
  }
  for (std::size_t i = 0; i < m; ++i) C.data[i] /= denom[seg[i]];
  return t.push(std::move(C),
                [logits, seg = std::move(seg), n_segments](Tape& t, int self) {
    const Tensor& alpha = t.value(self);
    const Tensor& dC = t.grad(self);
    Tensor& dL = t.grad(logits);
    std::vector<double> dot(n_segments, 0.0);
    for (std::size_t i = 0; i < seg.size(); ++i)
      dot[seg[i]] += alpha.data[i] * dC.data[i];
    for (std::size_t i = 0; i < seg.size(); ++i)
      dL.data[i] += alpha.data[i] * (dC.data[i] - dot[seg[i]]);
  });
}

// train mode drops with probability `rate` and rescales survivors; eval mode
// is the identity
inline int dropout(Tape& t, int a, double rate, bool train, Rng& rng) {
  if (!train || rate == 0.0) return a;
  const Tensor& A = t.value(a);
  std::vector<char> keep(A.data.size());
  Tensor C = A;
  const double inv = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < C.data.size(); ++i) {
    keep[i] = rng.next_double() >= rate;
    C.data[i] = keep[i] ? C.data[i] * inv : 0.0;
  }
  return t.push(std::move(C), [a, keep = std::move(keep), inv](Tape& t, int self) {
    const Tensor& dC = t.grad(self);
    Tensor& dA = t.grad(a);
    for (std::size_t i = 0; i < dC.data.size(); ++i)
      if (keep[i]) dA.data[i] += dC.data[i] * inv;
  });
}

inline int sum_all(Tape& t, int a) {
  const Tensor& A = t.value(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  return t.push(Tensor::scalar(s), [a](Tape& t, int self) {
    const double g = t.grad(self).data[0];
    Tensor& dA = t.grad(a);
    for (double& v : dA.data) v += g;
  });
}

inline int mean_all(Tape& t, int a) {
  return scale(t, sum_all(t, a), 1.0 / t.value(a).size());
}

// normalization statistics carried across batches for eval-mode forward
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  explicit BatchNormStats(int d = 0) : mean(d, 0.0), var(d, 1.0) {}
};

inline constexpr double kBatchNormEps = 1e-8;

// Normalizes each feature over the row (node) dimension. Train mode uses
// batch statistics and updates the running stats with the given momentum.
inline int batch_norm(Tape& t, int x, int gamma, int beta, BatchNormStats& stats,
                      bool train, double momentum = 0.1) {
  const Tensor& X = t.value(x);
  const int n = X.rows(), d = X.cols();
  require_shape(static_cast<int>(stats.mean.size()) == d, "batch_norm stats");
  require_shape(t.value(gamma).size() == d && t.value(beta).size() == d,
                "batch_norm params");

  std::vector<double> mu(d, 0.0), var(d, 0.0);
  if (train) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) mu[j] += X.at(i, j);
    for (int j = 0; j < d; ++j) mu[j] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        const double c = X.at(i, j) - mu[j];
        var[j] += c * c;
      }
    for (int j = 0; j < d; ++j) var[j] /= n;
    for (int j = 0; j < d; ++j) {
      stats.mean[j] = (1.0 - momentum) * stats.mean[j] + momentum * mu[j];
      stats.var[j] = (1.0 - momentum) * stats.var[j] + momentum * var[j];
    }
  } else {
    mu = stats.mean;
    var = stats.var;
  }
  std::vector<double> ivstd(d);
  for (int j = 0; j < d; ++j) ivstd[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);

  Tensor xhat{n, d};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) xhat.at(i, j) = (X.at(i, j) - mu[j]) * ivstd[j];
  Tensor Y{n, d};
  const Tensor& G = t.value(gamma);
  const Tensor& Bt = t.value(beta);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      Y.at(i, j) = G.data[j] * xhat.at(i, j) + Bt.data[j];

  return t.push(std::move(Y), [x, gamma, beta, xhat = std::move(xhat),
                               ivstd = std::move(ivstd), train, n,
                               d](Tape& t, int self) {
    const Tensor& dY = t.grad(self);
    const Tensor& G = t.value(gamma);
    Tensor& dX = t.grad(x);
    Tensor& dG = t.grad(gamma);
    Tensor& dB = t.grad(beta);
    for (int j = 0; j < d; ++j) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        sum_dy += dY.at(i, j);
        sum_dy_xhat += dY.at(i, j) * xhat.at(i, j);
      }
      dG.data[j] += sum_dy_xhat;
      dB.data[j] += sum_dy;
      if (train) {
        for (int i = 0; i < n; ++i)
          dX.at(i, j) += G.data[j] * ivstd[j] / n *
                         (n * dY.at(i, j) - sum_dy - xhat.at(i, j) * sum_dy_xhat);
      } else {
        for (int i = 0; i < n; ++i)
          dX.at(i, j) += G.data[j] * ivstd[j] * dY.at(i, j);
      }
    }
  });
}

}  // namespace ad

// Central-difference gradient check. Coordinates where the one-sided
// differences disagree (a kink, e.g. relu at 0) are skipped.
template <typename F>
double grad_check(F&& f, std::vector<Tensor>& params,
                  const std::vector<Tensor>& analytic, double step = 1e-5) {
  double max_rel = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].data.size(); ++i) {
      const double orig = params[p].data[i];
      params[p].data[i] = orig + step;
      const double fp = f(params);
      params[p].data[i] = orig - step;
      const double fm = f(params);
      params[p].data[i] = orig;
      const double f0 = f(params);
      const double fwd = (fp - f0) / step;
      const double bwd = (f0 - fm) / step;
      const double central = (fp - fm) / (2.0 * step);
      const double smooth_ref = std::max({std::abs(fwd), std::abs(bwd), 1e-6});
      if (std::abs(fwd - bwd) > 0.1 * smooth_ref) continue;  // kink: skip
      const double a = analytic[p].data[i];
      const double rel = std::abs(a - central) /
                         std::max({std::abs(a), std::abs(central), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace gridflow
