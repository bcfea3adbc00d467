#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gridflow/grid_model.hpp"
#include "gridflow/io.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/rng.hpp"

namespace gridflow {

enum class Season { Winter, Summer, SpringFall };

inline const char* to_string(Season s) {
  switch (s) {
    case Season::Winter: return "winter";
    case Season::Summer: return "summer";
    case Season::SpringFall: return "spring_fall";
  }
  return "?";
}

struct HourBand {
  int first_hour;
  int last_hour;  // inclusive
  double lo, hi;
};

struct LoadShapeConfig {
  double variation_fraction = 0.40;
  // morning/night valleys and midday/evening peaks; hours 16 and 22 are
  // uncovered and interpolate between neighboring band midpoints
  std::vector<HourBand> daily_profile = {
      {0, 5, 0.60, 0.70},
      {6, 9, 0.60, 0.70},
      {10, 15, 1.10, 1.20},
      {17, 21, 1.10, 1.20},
      {23, 23, 0.60, 0.70},
  };
  std::map<Season, std::pair<double, double>> seasonal_profile = {
      {Season::Winter, {1.2, 1.4}},
      {Season::Summer, {1.1, 1.3}},
      {Season::SpringFall, {0.9, 1.1}},
  };
  std::uint64_t seed = 0;
};

inline double daily_multiplier(int hour, Rng& rng,
                               const LoadShapeConfig& cfg = {}) {
  if (hour < 0 || hour > 23) throw std::invalid_argument("hour out of range");
  for (const HourBand& b : cfg.daily_profile)
    if (hour >= b.first_hour && hour <= b.last_hour)
      return rng.uniform(b.lo, b.hi);
  // nearest covered hours below and above, wrapping around midnight
  auto covered = [&](int h) {
    for (const HourBand& b : cfg.daily_profile)
      if (h >= b.first_hour && h <= b.last_hour) return &b;
    return static_cast<const HourBand*>(nullptr);
  };
  int below = hour, above = hour, dist_below = 0, dist_above = 0;
  const HourBand* bb = nullptr;
  const HourBand* ba = nullptr;
  while (!(bb = covered(below))) {
    below = (below + 23) % 24;
    ++dist_below;
  }
  while (!(ba = covered(above))) {
    above = (above + 1) % 24;
    ++dist_above;
  }
  const double mid_below = (bb->lo + bb->hi) / 2.0;
  const double mid_above = (ba->lo + ba->hi) / 2.0;
  const double t = static_cast<double>(dist_below) / (dist_below + dist_above);
  return mid_below + t * (mid_above - mid_below);
}

inline double seasonal_multiplier(Season season, Rng& rng,
                                  const LoadShapeConfig& cfg = {}) {
  const auto& range = cfg.seasonal_profile.at(season);
  return rng.uniform(range.first, range.second);
}

struct PerturbedScenario {
  Network net;
  int hour = 0;
  Season season = Season::SpringFall;
  double multiplier = 1.0;  // daily * seasonal, shared across buses
};

// Scales every load by a shared daily*seasonal multiplier plus a per-bus
// uniform jitter of +-variation_fraction; generator schedules scale with the
// total-load ratio so the slack bus only absorbs losses.
inline PerturbedScenario perturb_loads(const Network& net,
                                       const LoadShapeConfig& cfg, Rng& rng) {
  PerturbedScenario out;
  out.hour = static_cast<int>(rng.next_below(24));
  out.season = static_cast<Season>(rng.next_below(3));
  const double m =
      daily_multiplier(out.hour, rng, cfg) * seasonal_multiplier(out.season, rng, cfg);
  out.multiplier = m;
  out.net = net;
  double base_total = 0.0, new_total = 0.0;
  for (Bus& b : out.net.buses) {
    if (b.p_load == 0.0 && b.q_load == 0.0) continue;
    const double u = rng.uniform(-cfg.variation_fraction, cfg.variation_fraction);
    base_total += b.p_load;
    b.p_load *= m * (1.0 + u);
    b.q_load *= m * (1.0 + u);
    new_total += b.p_load;
  }
  if (base_total > 0.0) {
    const double ratio = new_total / base_total;
    for (Generator& g : out.net.generators) g.p_gen *= ratio;
  }
  return out;
}

// One-hot order in feature columns: [is_pv, is_pq, is_slack].
struct SampleRecord {
  int sample_id = 0;
  Eigen::MatrixXd inputs;   // n x 7: p, q, v_in, delta_in, one-hot type
  Eigen::MatrixXd targets;  // n x 2: v, delta
};

// Inputs carry only pre-solve knowledge: scheduled injections everywhere,
// setpoint V for slack/PV, setpoint delta for slack, flat 1.0/0.0 elsewhere.
inline SampleRecord encode_features(const Network& net,
                                    const PowerFlowSolution& sol) {
  if (!sol.converged)
    throw std::invalid_argument("encode_features: unconverged solution rejected");
  const int n = net.n_bus();
  const Injection sch = scheduled_injection(net);
  SampleRecord rec;
  rec.inputs = Eigen::MatrixXd::Zero(n, 7);
  rec.targets = Eigen::MatrixXd::Zero(n, 2);
  for (const Bus& b : net.buses) {
    const int i = b.id;
    rec.inputs(i, 0) = sch.p[i];
    rec.inputs(i, 1) = sch.q[i];
    switch (b.bus_type) {
      case BusType::Slack:
        rec.inputs(i, 2) = b.v_setpoint;
        rec.inputs(i, 3) = b.angle_setpoint;
        rec.inputs(i, 6) = 1.0;
        break;
      case BusType::PV:
        rec.inputs(i, 2) = b.v_setpoint;
        rec.inputs(i, 3) = 0.0;
        rec.inputs(i, 4) = 1.0;
        break;
      case BusType::PQ:
        rec.inputs(i, 2) = 1.0;
        rec.inputs(i, 3) = 0.0;
        rec.inputs(i, 5) = 1.0;
        break;
    }
    rec.targets(i, 0) = sol.state.v[i];
    rec.targets(i, 1) = sol.state.delta[i];
  }
  return rec;
}

struct DatasetManifest {
  std::string case_name;
  int scenarios = 0;
  int samples_per_scenario = 0;
  std::uint64_t seed = 0;
  LoadShapeConfig config;
  std::vector<std::string> files;
  long redraws = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["case"] = case_name;
    j["scenarios"] = scenarios;
    j["samples_per_scenario"] = samples_per_scenario;
    j["total_samples"] = scenarios * samples_per_scenario;
    j["seed"] = seed;
    j["redraws"] = redraws;
    j["config"]["variation_fraction"] = config.variation_fraction;
    for (const auto& b : config.daily_profile)
      j["config"]["daily_profile"].push_back(
          {{"first_hour", b.first_hour}, {"last_hour", b.last_hour},
           {"low", b.lo}, {"high", b.hi}});
    for (const auto& [s, r] : config.seasonal_profile)
      j["config"]["seasonal_profile"][to_string(s)] = {r.first, r.second};
    j["files"] = files;
    return j;
  }
};

namespace detail {

inline int worker_count() {
  if (const char* env = std::getenv("GRIDFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

}  // namespace detail

struct GeneratedSample {
  SampleRecord record;
  int hour;
  Season season;
  int attempts;
};

// Draw/perturb/solve/encode one sample; unconverged draws are retried with a
// fresh stream. Returns the number of failed attempts in .attempts.
inline GeneratedSample generate_sample(const Network& net,
                                       const LoadShapeConfig& cfg,
                                       std::uint64_t scenario_idx,
                                       std::uint64_t sample_idx,
                                       const SolverOptions& opts = {}) {
  constexpr int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(cfg.seed, scenario_idx, sample_idx,
                        static_cast<std::uint64_t>(attempt)));
    PerturbedScenario ps = perturb_loads(net, cfg, rng);
    PowerFlowSolution sol;
    bool ok = false;
    try {
      sol = solve_newton_raphson(ps.net, opts);
      ok = sol.converged;
    } catch (const SolverError&) {
      ok = false;
    }
    if (ok) {
      GeneratedSample out{encode_features(ps.net, sol), ps.hour, ps.season, attempt};
      out.record.sample_id = static_cast<int>(sample_idx);
      return out;
    }
  }
  throw std::runtime_error("generate_sample: no convergent scenario found");
}

inline std::string dataset_csv_header() {
  return "sample_id,bus_id,p,q,v_in,delta_in,is_pv,is_pq,is_slack,"
         "v_target,delta_target\n";
}

inline void append_sample_csv(std::ostringstream& out, const SampleRecord& rec) {
  const int n = static_cast<int>(rec.inputs.rows());
  for (int i = 0; i < n; ++i) {
    out << rec.sample_id << ',' << i;
    for (int c = 0; c < 7; ++c) out << ',' << fmt_double(rec.inputs(i, c));
    out << ',' << fmt_double(rec.targets(i, 0)) << ','
        << fmt_double(rec.targets(i, 1)) << '\n';
  }
}

inline DatasetManifest generate_dataset(const Network& net,
                                        const std::string& case_name,
                                        const LoadShapeConfig& cfg,
                                        int scenarios, int samples_per,
                                        const std::filesystem::path& out_dir,
                                        const SolverOptions& opts = {}) {
  if (scenarios < 1 || samples_per < 1)
    throw std::invalid_argument("scenario and sample counts must be >= 1");
  DatasetManifest man;
  man.case_name = case_name;
  man.scenarios = scenarios;
  man.samples_per_scenario = samples_per;
  man.seed = cfg.seed;
  man.config = cfg;

  const int workers = std::min(detail::worker_count(), samples_per);
  nlohmann::json scenario_meta = nlohmann::json::array();
  long total_redraws = 0;

  for (int sc = 0; sc < scenarios; ++sc) {
    std::vector<GeneratedSample> samples(samples_per);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mu;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= samples_per || failed.load()) return;
          try {
            samples[i] = generate_sample(net, cfg, sc, i, opts);
          } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(error_mu);
            error = e.what();
            failed.store(true);
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) throw std::runtime_error("dataset generation failed: " + error);

    long redraws = 0;
    for (const auto& s : samples) redraws += s.attempts;
    total_redraws += redraws;
    if (redraws > samples_per / 20)
      throw std::runtime_error(
          "dataset generation aborted: convergence failure rate above 5% (" +
          std::to_string(redraws) + " redraws in scenario " + std::to_string(sc + 1) +
          ")");

    std::ostringstream csv;
    csv << dataset_csv_header();
    nlohmann::json hours = nlohmann::json::array();
    nlohmann::json seasons = nlohmann::json::array();
    for (const auto& s : samples) {
      append_sample_csv(csv, s.record);
      hours.push_back(s.hour);
      seasons.push_back(to_string(s.season));
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s_scenario_%02d.csv", case_name.c_str(),
                  sc + 1);
    atomic_write(out_dir / name, csv.str());
    man.files.push_back(name);
    scenario_meta.push_back({{"file", name},
                             {"samples", samples_per},
                             {"redraws", redraws},
                             {"hours", hours},
                             {"seasons", seasons}});
  }
  man.redraws = total_redraws;
  nlohmann::json j = man.to_json();
  j["scenario_meta"] = scenario_meta;
  atomic_write(out_dir / (case_name + "_manifest.json"), j.dump(2) + "\n");
  return man;
}

}  // namespace gridflow
