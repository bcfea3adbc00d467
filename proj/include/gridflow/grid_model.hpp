#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridflow/io.hpp"

namespace gridflow {

inline constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

enum class BusType { Slack, PV, PQ };

inline const char* to_string(BusType t) {
  switch (t) {
    case BusType::Slack: return "slack";
    case BusType::PV: return "pv";
    case BusType::PQ: return "pq";
  }
  return "?";
}

struct Bus {
  int id = 0;  // dense 0-based index
  BusType bus_type = BusType::PQ;
  double p_load = 0.0;  // per-unit on system base
  double q_load = 0.0;
  double v_setpoint = 1.0;      // meaningful for Slack/PV
  double angle_setpoint = 0.0;  // radians, meaningful for Slack
  double shunt_g = 0.0;
  double shunt_b = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap = 1.0;
  bool status = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;
  double p_gen = 0.0;
  double v_setpoint = 1.0;
  double q_min = 0.0;  // informational, not enforced
  double q_max = 0.0;

  bool operator==(const Generator&) const = default;
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  double base_mva = 100.0;
  std::vector<int> original_ids;  // case-file numbering, parallel to buses

  int n_bus() const { return static_cast<int>(buses.size()); }
  int slack_index() const {
    for (const Bus& b : buses)
      if (b.bus_type == BusType::Slack) return b.id;
    return -1;
  }

  bool operator==(const Network&) const = default;
};

struct AdmittanceMatrix {
  Eigen::MatrixXd g;  // conductance
  Eigen::MatrixXd b;  // susceptance
};

struct EdgeIndex {
  std::vector<std::pair<int, int>> pairs;  // directed (src, dst)
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.pop_back();
  }
  return out;
}

inline double parse_num(const std::string& s, int line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError("line " + std::to_string(line_no) + ": trailing characters in '" + s + "'");
  return v;
}

}  // namespace detail

inline void validate(const Network& net) {
  const int n = net.n_bus();
  if (n == 0) throw ValidationError("network has no buses");
  int slack_count = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses[i];
    if (b.id != i) throw ValidationError("bus ids are not dense 0-based");
    if (b.bus_type == BusType::Slack) ++slack_count;
    if (b.bus_type != BusType::PQ && b.v_setpoint <= 0.0)
      throw ValidationError("bus " + std::to_string(i) + ": v_setpoint must be positive");
  }
  if (slack_count != 1)
    throw ValidationError("expected exactly one slack bus, found " +
                          std::to_string(slack_count));
  for (const Branch& br : net.branches) {
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw ValidationError("branch endpoint out of range");
    if (br.from_bus == br.to_bus)
      throw ValidationError("branch connects a bus to itself");
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + " has zero series impedance");
    if (br.tap <= 0.0) throw ValidationError("branch tap must be positive");
  }
  for (const Generator& g : net.generators) {
    if (g.bus < 0 || g.bus >= n) throw ValidationError("generator bus out of range");
    if (net.buses[g.bus].bus_type == BusType::PQ)
      throw ValidationError("generator attached to PQ bus " + std::to_string(g.bus));
  }
  // connectivity over in-service branches
  std::vector<std::vector<int>> adj(n);
  for (const Branch& br : net.branches) {
    if (!br.status) continue;
    adj[br.from_bus].push_back(br.to_bus);
    adj[br.to_bus].push_back(br.from_bus);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
  }
  if (n > 1 && reached != n)
    throw ValidationError("network is not connected over in-service branches");
}

// Sectioned CSV case format: [meta] base_mva; [bus]; [branch]; [gen].
// Loads/shunts arrive in MW/MVAr and are converted to per-unit here.
inline Network parse_case(const std::string& text) {
  Network net;
  net.base_mva = 0.0;
  std::map<int, int> id_map;  // original id -> dense index

  std::string section;
  std::vector<std::string> meta_keys;
  bool meta_values_read = false;
  bool header_skipped = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  struct RawBus {
    int id;
    std::string type;
    double pd, qd, gs, bs, vm, va_deg;
  };
  std::vector<RawBus> raw_buses;
  struct RawBranch {
    int from, to;
    double r, x, b, tap;
    int status;
  };
  std::vector<RawBranch> raw_branches;
  struct RawGen {
    int bus;
    double p_mw, vset, qmin, qmax;
  };
  std::vector<RawGen> raw_gens;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    line.erase(0, first);

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("line " + std::to_string(line_no) + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      header_skipped = false;
      meta_values_read = false;
      continue;
    }
    auto fields = detail::split_csv(line);
    if (section == "meta") {
      if (!meta_values_read) {
        meta_keys = fields;
        meta_values_read = true;
      } else {
        if (fields.size() != meta_keys.size())
          throw ParseError("line " + std::to_string(line_no) + ": meta arity mismatch");
        for (std::size_t i = 0; i < meta_keys.size(); ++i)
          if (meta_keys[i] == "base_mva")
            net.base_mva = detail::parse_num(fields[i], line_no);
      }
    } else if (section == "bus") {
      if (!header_skipped) {
        header_skipped = true;
        continue;
      }
      if (fields.size() != 8)
        throw ParseError("line " + std::to_string(line_no) + ": bus row needs 8 fields");
      RawBus b;
      b.id = static_cast<int>(detail::parse_num(fields[0], line_no));
      b.type = fields[1];
      b.pd = detail::parse_num(fields[2], line_no);
      b.qd = detail::parse_num(fields[3], line_no);
      b.gs = detail::parse_num(fields[4], line_no);
      b.bs = detail::parse_num(fields[5], line_no);
      b.vm = detail::parse_num(fields[6], line_no);
      b.va_deg = detail::parse_num(fields[7], line_no);
      if (b.type != "slack" && b.type != "pv" && b.type != "pq")
        throw ParseError("line " + std::to_string(line_no) + ": unknown bus type '" +
                         b.type + "'");
      raw_buses.push_back(b);
    } else if (section == "branch") {
      if (!header_skipped) {
        header_skipped = true;
        continue;
      }
      if (fields.size() != 7)
        throw ParseError("line " + std::to_string(line_no) + ": branch row needs 7 fields");
      RawBranch br;
      br.from = static_cast<int>(detail::parse_num(fields[0], line_no));
      br.to = static_cast<int>(detail::parse_num(fields[1], line_no));
      br.r = detail::parse_num(fields[2], line_no);
      br.x = detail::parse_num(fields[3], line_no);
      br.b = detail::parse_num(fields[4], line_no);
      br.tap = detail::parse_num(fields[5], line_no);
      br.status = static_cast<int>(detail::parse_num(fields[6], line_no));
      raw_branches.push_back(br);
    } else if (section == "gen") {
      if (!header_skipped) {
        header_skipped = true;
        continue;
      }
      if (fields.size() != 5)
        throw ParseError("line " + std::to_string(line_no) + ": gen row needs 5 fields");
      RawGen g;
      g.bus = static_cast<int>(detail::parse_num(fields[0], line_no));
      g.p_mw = detail::parse_num(fields[1], line_no);
      g.vset = detail::parse_num(fields[2], line_no);
      g.qmin = detail::parse_num(fields[3], line_no);
      g.qmax = detail::parse_num(fields[4], line_no);
      raw_gens.push_back(g);
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": data outside a known section");
    }
  }

  if (net.base_mva <= 0.0) throw ParseError("missing or non-positive base_mva");

  for (const auto& rb : raw_buses) {
    if (id_map.count(rb.id))
      throw ValidationError("duplicate bus id " + std::to_string(rb.id));
    int dense = static_cast<int>(net.buses.size());
    id_map[rb.id] = dense;
    net.original_ids.push_back(rb.id);
    Bus b;
    b.id = dense;
    b.bus_type = rb.type == "slack" ? BusType::Slack
                 : rb.type == "pv"  ? BusType::PV
                                    : BusType::PQ;
    b.p_load = rb.pd / net.base_mva;
    b.q_load = rb.qd / net.base_mva;
    b.v_setpoint = rb.vm;
    b.angle_setpoint = rb.va_deg * kDegToRad;
    b.shunt_g = rb.gs / net.base_mva;
    b.shunt_b = rb.bs / net.base_mva;
    net.buses.push_back(b);
  }
  auto lookup = [&](int id) {
    auto it = id_map.find(id);
    if (it == id_map.end())
      throw ValidationError("reference to unknown bus id " + std::to_string(id));
    return it->second;
  };
  for (const auto& rb : raw_branches) {
    Branch br;
    br.from_bus = lookup(rb.from);
    br.to_bus = lookup(rb.to);
    br.r = rb.r;
    br.x = rb.x;
    br.b_charging = rb.b;
    br.tap = rb.tap;
    br.status = rb.status != 0;
    net.branches.push_back(br);
  }
  for (const auto& rg : raw_gens) {
    Generator g;
    g.bus = lookup(rg.bus);
    g.p_gen = rg.p_mw / net.base_mva;
    g.v_setpoint = rg.vset;
    g.q_min = rg.qmin / net.base_mva;
    g.q_max = rg.qmax / net.base_mva;
    net.generators.push_back(g);
  }
  validate(net);
  return net;
}

inline std::string render_case(const Network& net) {
  std::ostringstream out;
  auto orig = [&](int dense) {
    return net.original_ids.empty() ? dense : net.original_ids[dense];
  };
  out << "[meta]\nbase_mva\n" << fmt_double(net.base_mva) << "\n\n";
  out << "[bus]\nid,type,p_load_mw,q_load_mvar,gs,bs,vm,va_deg\n";
  for (const Bus& b : net.buses) {
    out << orig(b.id) << ',' << to_string(b.bus_type) << ','
        << fmt_double(b.p_load * net.base_mva) << ','
        << fmt_double(b.q_load * net.base_mva) << ','
        << fmt_double(b.shunt_g * net.base_mva) << ','
        << fmt_double(b.shunt_b * net.base_mva) << ','
        << fmt_double(b.v_setpoint) << ','
        << fmt_double(b.angle_setpoint / kDegToRad) << '\n';
  }
  out << "\n[branch]\nfrom,to,r,x,b,tap,status\n";
  for (const Branch& br : net.branches) {
    out << orig(br.from_bus) << ',' << orig(br.to_bus) << ',' << fmt_double(br.r)
        << ',' << fmt_double(br.x) << ',' << fmt_double(br.b_charging) << ','
        << fmt_double(br.tap) << ',' << (br.status ? 1 : 0) << '\n';
  }
  out << "\n[gen]\nbus,p_mw,vset,qmin,qmax\n";
  for (const Generator& g : net.generators) {
    out << orig(g.bus) << ',' << fmt_double(g.p_gen * net.base_mva) << ','
        << fmt_double(g.v_setpoint) << ',' << fmt_double(g.q_min * net.base_mva)
        << ',' << fmt_double(g.q_max * net.base_mva) << '\n';
  }
  return out.str();
}

// Ybus assembly. For a branch with series admittance y = 1/(r + jx) and tap t:
// off-diagonals accumulate -y/t, the from diagonal y/t^2, the to diagonal y,
// and each side gets half the charging susceptance. Bus shunts land on the
// diagonal.
inline AdmittanceMatrix build_ybus(const Network& net) {
  const int n = net.n_bus();
  AdmittanceMatrix y;
  y.g = Eigen::MatrixXd::Zero(n, n);
  y.b = Eigen::MatrixXd::Zero(n, n);
  for (const Branch& br : net.branches) {
    if (!br.status) continue;
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError("in-service branch with zero series impedance");
    const double denom = br.r * br.r + br.x * br.x;
    const double gs = br.r / denom;
    const double bs = -br.x / denom;
    const double t = br.tap;
    const int i = br.from_bus, j = br.to_bus;
    y.g(i, j) += -gs / t;
    y.b(i, j) += -bs / t;
    y.g(j, i) += -gs / t;
    y.b(j, i) += -bs / t;
    y.g(i, i) += gs / (t * t);
    y.b(i, i) += bs / (t * t) + br.b_charging / 2.0;
    y.g(j, j) += gs;
    y.b(j, j) += bs + br.b_charging / 2.0;
  }
  for (const Bus& bus : net.buses) {
    y.g(bus.id, bus.id) += bus.shunt_g;
    y.b(bus.id, bus.id) += bus.shunt_b;
  }
  return y;
}

// Both directions per in-service branch; parallel circuits collapse to one
// edge pair.
inline EdgeIndex edge_index(const Network& net) {
  std::set<std::pair<int, int>> seen;
  EdgeIndex out;
  for (const Branch& br : net.branches) {
    if (!br.status) continue;
    for (auto [a, b] : {std::pair{br.from_bus, br.to_bus},
                        std::pair{br.to_bus, br.from_bus}}) {
      if (seen.insert({a, b}).second) out.pairs.emplace_back(a, b);
    }
  }
  return out;
}

}  // namespace gridflow
