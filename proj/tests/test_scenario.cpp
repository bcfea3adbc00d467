#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <limits>
#include <string>

#include "gridflow/grid_model.hpp"
#include "gridflow/io.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/scenario.hpp"

using namespace gridflow;

namespace {

Network shipped(const char* name) {
  return parse_case(read_file(std::string(GRIDFLOW_DATA_DIR) + "/" + name));
}

Network two_bus() {
  Network net;
  Bus slack;
  slack.id = 0;
  slack.bus_type = BusType::Slack;
  net.buses.push_back(slack);
  Bus pq;
  pq.id = 1;
  pq.p_load = 0.1;
  pq.q_load = 0.02;
  net.buses.push_back(pq);
  net.branches.push_back({0, 1, 0.01, 0.1, 0.0, 1.0, true});
  net.generators.push_back({0, 0.1, 1.0, -1, 1});
  validate(net);
  return net;
}

// config whose every multiplier is pinned to 1.0
LoadShapeConfig unit_config(double variation = 0.0) {
  LoadShapeConfig cfg;
  cfg.variation_fraction = variation;
  cfg.daily_profile = {{0, 23, 1.0, 1.0}};
  cfg.seasonal_profile = {{Season::Winter, {1.0, 1.0}},
                          {Season::Summer, {1.0, 1.0}},
                          {Season::SpringFall, {1.0, 1.0}}};
  return cfg;
}

}  // namespace

TEST_CASE("daily multiplier bands") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double mid = daily_multiplier(12, rng);
    REQUIRE(mid >= 1.10);
    REQUIRE(mid <= 1.20);
    const double night = daily_multiplier(3, rng);
    REQUIRE(night >= 0.60);
    REQUIRE(night <= 0.70);
  }
}

TEST_CASE("uncovered hours interpolate neighboring band midpoints") {
  Rng rng(2);
  // hour 16 sits between two [1.10, 1.20] bands; hour 22 between the evening
  // peak and the 23h valley
  REQUIRE(daily_multiplier(16, rng) == Catch::Approx(1.15).margin(1e-12));
  REQUIRE(daily_multiplier(22, rng) == Catch::Approx(0.90).margin(1e-12));
  REQUIRE_THROWS_AS(daily_multiplier(24, rng), std::invalid_argument);
}

TEST_CASE("seasonal multiplier bands with empirical coverage") {
  struct Want {
    Season s;
    double lo, hi;
  };
  for (const Want w : {Want{Season::Winter, 1.2, 1.4},
                       Want{Season::Summer, 1.1, 1.3},
                       Want{Season::SpringFall, 0.9, 1.1}}) {
    Rng rng(3);
    double seen_lo = std::numeric_limits<double>::infinity();
    double seen_hi = -seen_lo;
    for (int i = 0; i < 10000; ++i) {
      const double m = seasonal_multiplier(w.s, rng);
      REQUIRE(m >= w.lo);
      REQUIRE(m <= w.hi);
      seen_lo = std::min(seen_lo, m);
      seen_hi = std::max(seen_hi, m);
    }
    // histogram actually covers the band, not just a sliver of it
    REQUIRE(seen_lo < w.lo + 0.01);
    REQUIRE(seen_hi > w.hi - 0.01);
  }
}

TEST_CASE("daily multiplier empirical coverage over 10000 draws") {
  Rng rng(4);
  double lo = 10, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const double m = daily_multiplier(12, rng);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  REQUIRE(lo < 1.101);
  REQUIRE(hi > 1.199);
}

TEST_CASE("zero variation with unit multipliers leaves loads untouched") {
  const Network net = two_bus();
  Rng rng(5);
  const PerturbedScenario ps = perturb_loads(net, unit_config(), rng);
  REQUIRE(ps.multiplier == Catch::Approx(1.0));
  REQUIRE(ps.net == net);
}

TEST_CASE("perturbed loads stay within +-40% of the shared multiplier") {
  const Network net = shipped("ieee14.case");
  LoadShapeConfig cfg;
  cfg.seed = 9;
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const PerturbedScenario ps = perturb_loads(net, cfg, rng);
    for (int i = 0; i < net.n_bus(); ++i) {
      const Bus& base = net.buses[i];
      if (base.p_load == 0.0 && base.q_load == 0.0) continue;
      const double lo = ps.multiplier * 0.6, hi = ps.multiplier * 1.4;
      if (base.p_load != 0.0) {
        const double ratio = ps.net.buses[i].p_load / base.p_load;
        REQUIRE(ratio >= lo - 1e-12);
        REQUIRE(ratio <= hi + 1e-12);
      }
      if (base.q_load != 0.0) {
        const double qratio = ps.net.buses[i].q_load / base.q_load;
        REQUIRE(qratio >= lo - 1e-12);
        REQUIRE(qratio <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("perturbation is deterministic under seed") {
  const Network net = shipped("ieee14.case");
  LoadShapeConfig cfg;
  Rng r1(77), r2(77);
  const PerturbedScenario a = perturb_loads(net, cfg, r1);
  const PerturbedScenario b = perturb_loads(net, cfg, r2);
  REQUIRE(a.net == b.net);
  REQUIRE(a.hour == b.hour);
  REQUIRE(a.multiplier == b.multiplier);
}

TEST_CASE("generator schedules scale with the total load ratio") {
  const Network net = shipped("ieee14.case");
  LoadShapeConfig cfg;
  Rng rng(13);
  const PerturbedScenario ps = perturb_loads(net, cfg, rng);
  double base_total = 0.0, new_total = 0.0;
  for (int i = 0; i < net.n_bus(); ++i) {
    base_total += net.buses[i].p_load;
    new_total += ps.net.buses[i].p_load;
  }
  const double ratio = new_total / base_total;
  for (std::size_t g = 0; g < net.generators.size(); ++g)
    REQUIRE(ps.net.generators[g].p_gen ==
            Catch::Approx(net.generators[g].p_gen * ratio).margin(1e-12));
}

TEST_CASE("encoded features carry only pre-solve knowledge") {
  const Network net = shipped("ieee14.case");
  const PowerFlowSolution sol = solve_newton_raphson(net);
  const SampleRecord rec = encode_features(net, sol);
  REQUIRE(rec.inputs.rows() == 14);
  REQUIRE(rec.inputs.cols() == 7);
  REQUIRE(rec.targets.cols() == 2);
  const Injection sch = scheduled_injection(net);
  for (const Bus& b : net.buses) {
    const int i = b.id;
    REQUIRE(rec.inputs(i, 0) == sch.p[i]);
    REQUIRE(rec.inputs(i, 1) == sch.q[i]);
    // one-hot [pv, pq, slack] sums to 1 and matches the type
    REQUIRE(rec.inputs(i, 4) + rec.inputs(i, 5) + rec.inputs(i, 6) == 1.0);
    switch (b.bus_type) {
      case BusType::Slack:
        REQUIRE(rec.inputs(i, 6) == 1.0);
        REQUIRE(rec.inputs(i, 2) == b.v_setpoint);
        REQUIRE(rec.inputs(i, 3) == b.angle_setpoint);
        // slack targets equal its inputs: nothing was unknown
        REQUIRE(rec.targets(i, 0) == rec.inputs(i, 2));
        REQUIRE(rec.targets(i, 1) == rec.inputs(i, 3));
        break;
      case BusType::PV:
        REQUIRE(rec.inputs(i, 4) == 1.0);
        REQUIRE(rec.inputs(i, 2) == b.v_setpoint);
        REQUIRE(rec.inputs(i, 3) == 0.0);
        break;
      case BusType::PQ:
        REQUIRE(rec.inputs(i, 5) == 1.0);
        REQUIRE(rec.inputs(i, 2) == 1.0);
        REQUIRE(rec.inputs(i, 3) == 0.0);
        break;
    }
    REQUIRE(rec.targets(i, 0) == sol.state.v[i]);
    REQUIRE(rec.targets(i, 1) == sol.state.delta[i]);
  }
}

TEST_CASE("unconverged solutions are rejected by the encoder") {
  const Network net = two_bus();
  PowerFlowSolution bogus = solve_newton_raphson(net);
  bogus.converged = false;
  REQUIRE_THROWS_AS(encode_features(net, bogus), std::invalid_argument);
}

TEST_CASE("generate_dataset writes exact counts and valid targets") {
  const auto dir = std::filesystem::temp_directory_path() / "gridflow_scn_test";
  std::filesystem::remove_all(dir);
  const Network net = two_bus();
  LoadShapeConfig cfg;
  cfg.seed = 21;
  const DatasetManifest man = generate_dataset(net, "twobus", cfg, 1, 3, dir);
  REQUIRE(man.files.size() == 1);
  REQUIRE(man.scenarios == 1);
  REQUIRE(man.samples_per_scenario == 3);
  const std::string csv = read_file(dir / man.files[0]);
  // header + scenarios * samples * n_bus rows
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2);
  REQUIRE(std::filesystem::exists(dir / "twobus_manifest.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset generation is byte-identical across reruns and threads") {
  const auto d1 = std::filesystem::temp_directory_path() / "gridflow_scn_a";
  const auto d2 = std::filesystem::temp_directory_path() / "gridflow_scn_b";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  const Network net = shipped("ieee14.case");
  LoadShapeConfig cfg;
  cfg.seed = 33;
  generate_dataset(net, "ieee14", cfg, 2, 8, d1);
  setenv("GRIDFLOW_THREADS", "1", 1);  // serial pass must match the pooled one
  generate_dataset(net, "ieee14", cfg, 2, 8, d2);
  unsetenv("GRIDFLOW_THREADS");
  for (const char* f : {"ieee14_scenario_01.csv", "ieee14_scenario_02.csv",
                        "ieee14_manifest.json"})
    REQUIRE(read_file(d1 / f) == read_file(d2 / f));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("emitted samples reproduce true power-flow solutions") {
  const auto dir = std::filesystem::temp_directory_path() / "gridflow_scn_tgt";
  std::filesystem::remove_all(dir);
  const Network net = shipped("ieee14.case");
  LoadShapeConfig cfg;
  cfg.seed = 55;
  generate_dataset(net, "ieee14", cfg, 1, 5, dir);
  // regenerate the same perturbations and confirm the stored targets satisfy
  // the mismatch equations of the perturbed network
  for (int i = 0; i < 5; ++i) {
    const GeneratedSample s = generate_sample(net, cfg, 0, i);
    Rng rng(derive_seed(cfg.seed, 0, i, s.attempts));
    const PerturbedScenario ps = perturb_loads(net, cfg, rng);
    const AdmittanceMatrix y = build_ybus(ps.net);
    BusState state;
    state.v = Eigen::VectorXd(net.n_bus());
    state.delta = Eigen::VectorXd(net.n_bus());
    for (int b = 0; b < net.n_bus(); ++b) {
      state.v[b] = s.record.targets(b, 0);
      state.delta[b] = s.record.targets(b, 1);
    }
    REQUIRE(mismatch(ps.net, y, state).cwiseAbs().maxCoeff() <= 1e-8);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid generation requests fail loudly") {
  const Network net = two_bus();
  LoadShapeConfig cfg;
  REQUIRE_THROWS_AS(generate_dataset(net, "x", cfg, 0, 3, "/tmp/unused"),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(generate_dataset(net, "x", cfg, 1, 0, "/tmp/unused"),
                    std::invalid_argument);
}
