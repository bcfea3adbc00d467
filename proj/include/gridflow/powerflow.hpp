#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridflow/grid_model.hpp"

namespace gridflow {

struct BusState {
  Eigen::VectorXd v;      // per-unit magnitude
  Eigen::VectorXd delta;  // radians
};

struct Injection {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

struct PowerFlowSolution {
  BusState state;
  Injection injection;
  int iterations = 0;
  double max_mismatch = 0.0;
  bool converged = false;
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 30;
  bool flat_start = true;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// P_i = V_i sum_j V_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j))
// Q_i = V_i sum_j V_j (G_ij sin(d_i - d_j) - B_ij cos(d_i - d_j))
inline Injection power_injection(const AdmittanceMatrix& y, const BusState& s) {
  const int n = static_cast<int>(s.v.size());
  Injection inj;
  inj.p = Eigen::VectorXd::Zero(n);
  inj.q = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    double p = 0.0, q = 0.0;
    for (int j = 0; j < n; ++j) {
      const double th = s.delta[i] - s.delta[j];
      const double c = std::cos(th), sn = std::sin(th);
      p += s.v[j] * (y.g(i, j) * c + y.b(i, j) * sn);
      q += s.v[j] * (y.g(i, j) * sn - y.b(i, j) * c);
    }
    inj.p[i] = s.v[i] * p;
    inj.q[i] = s.v[i] * q;
  }
  return inj;
}

// Scheduled net injections: generation minus load per bus.
inline Injection scheduled_injection(const Network& net) {
  const int n = net.n_bus();
  Injection sch;
  sch.p = Eigen::VectorXd::Zero(n);
  sch.q = Eigen::VectorXd::Zero(n);
  for (const Generator& g : net.generators) sch.p[g.bus] += g.p_gen;
  for (const Bus& b : net.buses) {
    sch.p[b.id] -= b.p_load;
    sch.q[b.id] -= b.q_load;
  }
  return sch;
}

// Row order of the Newton system: P rows over PV+PQ buses (ascending index),
// then Q rows over PQ buses. Columns mirror this with delta then V unknowns.
struct SolveIndex {
  std::vector<int> pvpq;  // buses with a P equation / delta unknown
  std::vector<int> pq;    // buses with a Q equation / V unknown

  explicit SolveIndex(const Network& net) {
    for (const Bus& b : net.buses) {
      if (b.bus_type != BusType::Slack) pvpq.push_back(b.id);
      if (b.bus_type == BusType::PQ) pq.push_back(b.id);
    }
  }
  int rows() const { return static_cast<int>(pvpq.size() + pq.size()); }
};

inline Eigen::VectorXd mismatch(const Network& net, const AdmittanceMatrix& y,
                                const BusState& s) {
  const SolveIndex idx(net);
  const Injection sch = scheduled_injection(net);
  const Injection got = power_injection(y, s);
  Eigen::VectorXd r(idx.rows());
  int k = 0;
  for (int b : idx.pvpq) r[k++] = sch.p[b] - got.p[b];
  for (int b : idx.pq) r[k++] = sch.q[b] - got.q[b];
  return r;
}

// Analytic Jacobian of the computed injections w.r.t. (delta over PV+PQ,
// V over PQ), same ordering as mismatch().
inline Eigen::MatrixXd jacobian(const Network& net, const AdmittanceMatrix& y,
                                const BusState& s) {
  const SolveIndex idx(net);
  const Injection got = power_injection(y, s);
  const int np = static_cast<int>(idx.pvpq.size());
  const int nq = static_cast<int>(idx.pq.size());
  Eigen::MatrixXd J(np + nq, np + nq);

  auto dP_ddelta = [&](int i, int j) {
    if (i == j) return -got.q[i] - y.b(i, i) * s.v[i] * s.v[i];
    const double th = s.delta[i] - s.delta[j];
    return s.v[i] * s.v[j] * (y.g(i, j) * std::sin(th) - y.b(i, j) * std::cos(th));
  };
  auto dP_dv = [&](int i, int j) {
    if (i == j) return got.p[i] / s.v[i] + y.g(i, i) * s.v[i];
    const double th = s.delta[i] - s.delta[j];
    return s.v[i] * (y.g(i, j) * std::cos(th) + y.b(i, j) * std::sin(th));
  };
  auto dQ_ddelta = [&](int i, int j) {
    if (i == j) return got.p[i] - y.g(i, i) * s.v[i] * s.v[i];
    const double th = s.delta[i] - s.delta[j];
    return -s.v[i] * s.v[j] * (y.g(i, j) * std::cos(th) + y.b(i, j) * std::sin(th));
  };
  auto dQ_dv = [&](int i, int j) {
    if (i == j) return got.q[i] / s.v[i] - y.b(i, i) * s.v[i];
    const double th = s.delta[i] - s.delta[j];
    return s.v[i] * (y.g(i, j) * std::sin(th) - y.b(i, j) * std::cos(th));
  };

  for (int r = 0; r < np; ++r) {
    const int i = idx.pvpq[r];
    for (int c = 0; c < np; ++c) J(r, c) = dP_ddelta(i, idx.pvpq[c]);
    for (int c = 0; c < nq; ++c) J(r, np + c) = dP_dv(i, idx.pq[c]);
  }
  for (int r = 0; r < nq; ++r) {
    const int i = idx.pq[r];
    for (int c = 0; c < np; ++c) J(np + r, c) = dQ_ddelta(i, idx.pvpq[c]);
    for (int c = 0; c < nq; ++c) J(np + r, np + c) = dQ_dv(i, idx.pq[c]);
  }
  return J;
}

inline BusState initial_state(const Network& net, bool flat_start) {
  const int n = net.n_bus();
  BusState s;
  s.v = Eigen::VectorXd::Ones(n);
  s.delta = Eigen::VectorXd::Zero(n);
  for (const Bus& b : net.buses) {
    if (b.bus_type == BusType::Slack) {
      s.v[b.id] = b.v_setpoint;
      s.delta[b.id] = b.angle_setpoint;
    } else if (b.bus_type == BusType::PV) {
      s.v[b.id] = b.v_setpoint;
      if (!flat_start) s.delta[b.id] = b.angle_setpoint;
    }
  }
  return s;
}

inline PowerFlowSolution solve_newton_raphson(const Network& net,
                                              const SolverOptions& opts = {}) {
  if (opts.tolerance <= 0.0) throw SolverError("tolerance must be positive");
  if (opts.max_iterations < 1) throw SolverError("max_iterations must be >= 1");
  const AdmittanceMatrix y = build_ybus(net);
  const SolveIndex idx(net);
  const int np = static_cast<int>(idx.pvpq.size());

  PowerFlowSolution sol;
  sol.state = initial_state(net, opts.flat_start);

  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Eigen::VectorXd r = mismatch(net, y, sol.state);
    sol.max_mismatch = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
    sol.iterations = it;
    if (sol.max_mismatch <= opts.tolerance) {
      sol.converged = true;
      break;
    }
    if (it == opts.max_iterations) break;

    const Eigen::MatrixXd J = jacobian(net, y, sol.state);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const Eigen::VectorXd dx = lu.solve(r);
    if (!dx.allFinite()) throw SolverError("singular Jacobian in Newton step");
    for (int k = 0; k < np; ++k) sol.state.delta[idx.pvpq[k]] += dx[k];
    for (std::size_t k = 0; k < idx.pq.size(); ++k)
      sol.state.v[idx.pq[k]] += dx[np + static_cast<int>(k)];
    if (!sol.state.v.allFinite() || !sol.state.delta.allFinite())
      throw SolverError("state diverged to non-finite values");
  }
  sol.injection = power_injection(y, sol.state);
  return sol;
}

inline std::string solution_csv(const Network& net, const PowerFlowSolution& sol) {
  std::ostringstream out;
  out << "bus_id,bus_type,v_pu,delta_rad,p_pu,q_pu\n";
  for (const Bus& b : net.buses) {
    const int oid = net.original_ids.empty() ? b.id : net.original_ids[b.id];
    out << oid << ',' << to_string(b.bus_type) << ','
        << fmt_double(sol.state.v[b.id]) << ',' << fmt_double(sol.state.delta[b.id])
        << ',' << fmt_double(sol.injection.p[b.id]) << ','
        << fmt_double(sol.injection.q[b.id]) << '\n';
  }
  return out.str();
}

}  // namespace gridflow
