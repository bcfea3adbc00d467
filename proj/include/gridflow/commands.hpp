#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridflow/checkpoint.hpp"
#include "gridflow/evaluation.hpp"
#include "gridflow/gnn.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/io.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/scenario.hpp"
#include "gridflow/svg.hpp"
#include "gridflow/training.hpp"

namespace gridflow {

// Everything the subcommands need, filled from argv by the CLI front end.
// All randomness flows from the single seed.
struct CommandConfig {
  std::filesystem::path case_path;
  std::filesystem::path config_path;  // optional JSON, train/evaluate only
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;  // default documented in --help
  std::string arch = "gcn";
  int scenarios = 10;
  int samples = 100;
};

namespace cli_detail {

// seed stream tags so generate / split / init draws never collide
inline constexpr std::uint64_t kTagSplit = 0xB22;

inline std::string case_stem(const std::filesystem::path& p) {
  return p.stem().string();
}

inline void ensure_layout(const std::filesystem::path& out) {
  for (const char* sub : {"datasets", "checkpoints", "reports", "plots"})
    std::filesystem::create_directories(out / sub);
}

inline Network load_case(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("case file not found: " + path.string());
  return parse_case(read_file(path));
}

// JSON mirroring TrainConfig + GnnConfig; unknown keys are rejected so typos
// fail loudly.
inline void apply_config_json(const nlohmann::json& j, TrainConfig& tc,
                              GnnConfig& gc) {
  for (const auto& [key, val] : j.items()) {
    if (key == "lr") tc.lr = val.get<double>();
    else if (key == "l2_lambda") tc.l2_lambda = val.get<double>();
    else if (key == "batch_size") tc.batch_size = val.get<int>();
    else if (key == "max_epochs") tc.max_epochs = val.get<int>();
    else if (key == "patience") tc.patience = val.get<int>();
    else if (key == "scheduler") {
      const std::string s = val.get<std::string>();
      if (s == "plateau") tc.scheduler = Scheduler::PlateauReduce;
      else if (s == "exp_decay") tc.scheduler = Scheduler::ExpDecay;
      else throw std::runtime_error("config field 'scheduler': expected "
                                    "'plateau' or 'exp_decay', got '" + s + "'");
    } else if (key == "arch") gc.arch = arch_from_string(val.get<std::string>());
    else if (key == "layer_sizes") gc.layer_sizes = val.get<std::vector<int>>();
    else if (key == "fc_hidden") gc.fc_hidden = val.get<int>();
    else if (key == "dropout") gc.dropout = val.get<double>();
    else if (key == "gat_heads") gc.gat_heads = val.get<int>();
    else if (key == "leaky_slope") gc.leaky_slope = val.get<double>();
    else throw std::runtime_error("config field '" + key + "' is not recognized");
  }
  if (tc.lr <= 0 || tc.l2_lambda < 0 || tc.batch_size < 1 || tc.max_epochs < 1 ||
      tc.patience < 1)
    throw std::runtime_error("config: lr/batch_size/max_epochs/patience must be "
                             "positive, l2_lambda non-negative");
  if (tc.patience > tc.max_epochs)
    throw std::runtime_error("config field 'patience' exceeds 'max_epochs'");
  for (int s : gc.layer_sizes)
    if (s < 1) throw std::runtime_error("config field 'layer_sizes': sizes must be >= 1");
}

inline std::vector<std::string> manifest_files(const std::filesystem::path& out,
                                               const std::string& stem) {
  const auto mpath = out / "datasets" / (stem + "_manifest.json");
  if (!std::filesystem::exists(mpath))
    throw std::runtime_error("no dataset manifest at " + mpath.string() +
                             "; run `generate` first");
  const nlohmann::json m = nlohmann::json::parse(read_file(mpath));
  return m.at("files").get<std::vector<std::string>>();
}

}  // namespace cli_detail

inline int cmd_generate(const CommandConfig& cc) {
  cli_detail::ensure_layout(cc.out_dir);
  const Network net = cli_detail::load_case(cc.case_path);
  LoadShapeConfig cfg;
  cfg.seed = cc.seed;
  const DatasetManifest man =
      generate_dataset(net, cli_detail::case_stem(cc.case_path), cfg,
                       cc.scenarios, cc.samples, cc.out_dir / "datasets");
  std::cout << "wrote " << man.files.size() << " scenario files ("
            << man.scenarios * man.samples_per_scenario << " samples, "
            << man.redraws << " redraws) to "
            << (cc.out_dir / "datasets").string() << "\n";
  return 0;
}

inline int cmd_solve(const CommandConfig& cc) {
  cli_detail::ensure_layout(cc.out_dir);
  const Network net = cli_detail::load_case(cc.case_path);
  const std::string stem = cli_detail::case_stem(cc.case_path);
  const PowerFlowSolution sol = solve_newton_raphson(net);

  nlohmann::json diag{{"case", stem},
                      {"converged", sol.converged},
                      {"iterations", sol.iterations},
                      {"max_mismatch", sol.max_mismatch},
                      {"n_bus", net.n_bus()}};
  atomic_write(cc.out_dir / "reports" / (stem + "_solve.json"),
               diag.dump(2) + "\n");
  atomic_write(cc.out_dir / "reports" / (stem + "_solution.csv"),
               solution_csv(net, sol));
  if (!sol.converged) {
    std::cerr << "power flow did not converge after " << sol.iterations
              << " iterations (max mismatch " << sol.max_mismatch << " pu)\n";
    return 1;
  }
  std::cout << "converged in " << sol.iterations << " iterations, max mismatch "
            << fmt_double(sol.max_mismatch) << " pu\n";
  return 0;
}

// Split protocol: train on scenario file 1 in full, validate on 20% of file 2,
// test (in cmd_evaluate) on 20% of every file.
inline int cmd_train(const CommandConfig& cc) {
  cli_detail::ensure_layout(cc.out_dir);
  const Network net = cli_detail::load_case(cc.case_path);
  const std::string stem = cli_detail::case_stem(cc.case_path);

  TrainConfig tc;
  tc.seed = cc.seed;
  GnnConfig gc;
  gc.arch = arch_from_string(cc.arch);
  gc.n_bus = net.n_bus();
  if (!cc.config_path.empty())
    cli_detail::apply_config_json(
        nlohmann::json::parse(read_file(cc.config_path)), tc, gc);

  const std::vector<std::string> files =
      cli_detail::manifest_files(cc.out_dir, stem);
  if (files.size() < 2)
    throw std::runtime_error("need at least 2 scenario files (train + "
                             "validation); regenerate with --scenarios >= 2");
  const auto dsdir = cc.out_dir / "datasets";
  const Dataset train_ds = load_dataset_csv(dsdir / files[0]);
  const Dataset val_full = load_dataset_csv(dsdir / files[1]);
  const Dataset val_ds =
      select_fraction(val_full, 0.2, derive_seed(cc.seed, cli_detail::kTagSplit, 1));

  const GraphTopology topo = make_topology(edge_index(net), net.n_bus());
  const TrainResult res = train(gc, topo, train_ds, val_ds, tc);

  const std::string tag = stem + "_" + cc.arch;
  save_checkpoint(cc.out_dir / "checkpoints" / (tag + ".ckpt"),
                  Checkpoint{res.best, res.stats});
  atomic_write(cc.out_dir / "reports" / (tag + "_history.csv"),
               res.history.to_csv());

  LineSeries tr{"train", {}}, va{"validation", {}};
  for (const EpochRecord& e : res.history.epochs) {
    tr.y.push_back(e.train_loss);
    va.y.push_back(e.val_loss);
  }
  atomic_write(cc.out_dir / "plots" / (tag + "_loss.svg"),
               line_chart_svg("Loss (" + tag + ")", "epoch", {tr, va}));

  std::cout << "trained " << tag << ": " << res.history.epochs.size()
            << " epochs, best val loss "
            << fmt_double(res.history.best_val_loss) << " at epoch "
            << res.history.best_epoch << " (" << res.history.stop_reason
            << ")\n";
  return 0;
}

inline int cmd_evaluate(const CommandConfig& cc) {
  cli_detail::ensure_layout(cc.out_dir);
  const Network net = cli_detail::load_case(cc.case_path);
  const std::string stem = cli_detail::case_stem(cc.case_path);
  const std::string tag = stem + "_" + cc.arch;

  const auto ckpath = cc.out_dir / "checkpoints" / (tag + ".ckpt");
  if (!std::filesystem::exists(ckpath))
    throw std::runtime_error("no checkpoint at " + ckpath.string() +
                             "; run `train` first");
  Checkpoint ck = load_checkpoint(ckpath);
  if (ck.params.cfg.n_bus != net.n_bus())
    throw std::runtime_error("checkpoint was trained on a " +
                             std::to_string(ck.params.cfg.n_bus) +
                             "-bus case, got " + std::to_string(net.n_bus()));

  const std::vector<std::string> files =
      cli_detail::manifest_files(cc.out_dir, stem);
  const GraphTopology topo = make_topology(edge_index(net), net.n_bus());
  const auto dsdir = cc.out_dir / "datasets";

  std::vector<RunResult> runs;
  std::vector<BarSeries> nrmse_bars, r2_bars;
  nlohmann::json reports = nlohmann::json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Dataset full = load_dataset_csv(dsdir / files[i]);
    const Dataset test = select_fraction(
        full, 0.2, derive_seed(cc.seed, cli_detail::kTagSplit, 2, i));
    RunResult r;
    r.case_name = stem;
    r.arch = cc.arch;
    r.seed = cc.seed;
    r.test = evaluate(ck.params, topo, test, ck.stats);
    r.test_loss = evaluate_loss(ck.params, topo, test, ck.stats, 16);
    runs.push_back(r);
    nlohmann::json rep = metrics_json(r.test);
    rep["file"] = files[i];
    rep["test_samples"] = test.size();
    rep["test_loss"] = r.test_loss;
    reports.push_back(rep);
    const std::string label = "s" + std::to_string(i + 1);
    nrmse_bars.push_back({label, r.test.nrmse.value_or(0.0)});
    r2_bars.push_back({label, r.test.r2});
  }

  const std::vector<SummaryRow> rows = summarize(runs);
  nlohmann::json summary = summary_json(rows);
  summary["reports"] = reports;
  summary["nrmse_normalizer"] = "truth_range";
  atomic_write(cc.out_dir / "reports" / (tag + "_evaluation.json"),
               summary.dump(2) + "\n");
  atomic_write(cc.out_dir / "reports" / (tag + "_evaluation.csv"),
               "# nrmse normalized by truth range per target column\n" +
                   runs_csv(runs));
  atomic_write(cc.out_dir / "plots" / (tag + "_nrmse.svg"),
               bar_chart_svg("NRMSE per scenario file (" + tag + ")", nrmse_bars));
  atomic_write(cc.out_dir / "plots" / (tag + "_r2.svg"),
               bar_chart_svg("R2 per scenario file (" + tag + ")", r2_bars));

  std::cout << "evaluated " << tag << " on " << files.size()
            << " test splits: mean NRMSE " << fmt_double(rows[0].mean_nrmse)
            << ", mean R2 " << fmt_double(rows[0].mean_r2) << "\n";
  return 0;
}

// Cross-architecture comparison over whichever checkpoints exist for the case.
inline int cmd_report(const CommandConfig& cc) {
  cli_detail::ensure_layout(cc.out_dir);
  const Network net = cli_detail::load_case(cc.case_path);
  const std::string stem = cli_detail::case_stem(cc.case_path);
  const std::vector<std::string> files =
      cli_detail::manifest_files(cc.out_dir, stem);
  const GraphTopology topo = make_topology(edge_index(net), net.n_bus());
  const auto dsdir = cc.out_dir / "datasets";

  // pooled test split: 20% of every scenario file
  Dataset test;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Dataset full = load_dataset_csv(dsdir / files[i]);
    const Dataset part = select_fraction(
        full, 0.2, derive_seed(cc.seed, cli_detail::kTagSplit, 2, i));
    test.n_bus = part.n_bus;
    test.samples.insert(test.samples.end(), part.samples.begin(),
                        part.samples.end());
  }

  std::vector<RunResult> runs;
  std::vector<BarSeries> nrmse_bars, r2_bars, loss_bars;
  for (const char* arch : {"gcn", "gat", "sage", "graphconv"}) {
    const auto ckpath =
        cc.out_dir / "checkpoints" / (stem + "_" + arch + ".ckpt");
    if (!std::filesystem::exists(ckpath)) continue;
    Checkpoint ck = load_checkpoint(ckpath);
    RunResult r;
    r.case_name = stem;
    r.arch = arch;
    r.seed = cc.seed;
    r.test = evaluate(ck.params, topo, test, ck.stats);
    r.test_loss = evaluate_loss(ck.params, topo, test, ck.stats, 16);
    runs.push_back(r);
    nrmse_bars.push_back({arch, r.test.nrmse.value_or(0.0)});
    r2_bars.push_back({arch, r.test.r2});
    loss_bars.push_back({arch, r.test_loss});
  }
  if (runs.empty())
    throw std::runtime_error("no checkpoints found for case '" + stem +
                             "'; run `train` first");

  nlohmann::json summary = summary_json(summarize(runs));
  summary["nrmse_normalizer"] = "truth_range";
  summary["test_samples"] = test.size();
  atomic_write(cc.out_dir / "reports" / (stem + "_comparison.json"),
               summary.dump(2) + "\n");
  atomic_write(cc.out_dir / "reports" / (stem + "_comparison.csv"),
               "# nrmse normalized by truth range per target column\n" +
                   runs_csv(runs));
  atomic_write(cc.out_dir / "plots" / (stem + "_nrmse.svg"),
               bar_chart_svg("Test NRMSE by architecture (" + stem + ")",
                             nrmse_bars));
  atomic_write(cc.out_dir / "plots" / (stem + "_r2.svg"),
               bar_chart_svg("Test R2 by architecture (" + stem + ")", r2_bars));
  atomic_write(cc.out_dir / "plots" / (stem + "_test_loss.svg"),
               bar_chart_svg("Test loss by architecture (" + stem + ")",
                             loss_bars));

  std::cout << "comparison report for " << stem << " covers " << runs.size()
            << " architectures over " << test.size() << " test samples\n";
  return 0;
}

}  // namespace gridflow
