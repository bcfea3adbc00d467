#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "gridflow/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gridflow: AC power flow datasets, GNN surrogates and reports"};
  app.require_subcommand(1);

  gridflow::CommandConfig cc;

  const auto common = [&](CLI::App* sub, bool needs_case) {
    auto* c = sub->add_option("--case", cc.case_path, "case file path");
    if (needs_case) c->required();
    sub->add_option("--out", cc.out_dir, "output directory (default: out)");
    sub->add_option("--seed", cc.seed, "master seed, drives all randomness (default: 0)");
  };

  CLI::App* gen = app.add_subcommand("generate", "generate scenario datasets");
  common(gen, true);
  gen->add_option("--scenarios", cc.scenarios, "number of scenario files (default: 10)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--samples", cc.samples, "samples per scenario (default: 100)")
      ->check(CLI::PositiveNumber);

  CLI::App* solve = app.add_subcommand("solve", "solve base-load power flow");
  common(solve, true);

  CLI::App* train = app.add_subcommand("train", "train a model on generated data");
  common(train, true);
  train->add_option("--config", cc.config_path, "JSON training config")
      ->check(CLI::ExistingFile);
  train->add_option("--arch", cc.arch, "gcn|gat|sage|graphconv (default: gcn)")
      ->check(CLI::IsMember({"gcn", "gat", "sage", "graphconv"}));

  CLI::App* eval = app.add_subcommand("evaluate", "score a checkpoint on test splits");
  common(eval, true);
  eval->add_option("--arch", cc.arch, "gcn|gat|sage|graphconv (default: gcn)")
      ->check(CLI::IsMember({"gcn", "gat", "sage", "graphconv"}));

  CLI::App* report = app.add_subcommand("report", "cross-architecture comparison");
  common(report, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gridflow::cmd_generate(cc);
    if (solve->parsed()) return gridflow::cmd_solve(cc);
    if (train->parsed()) return gridflow::cmd_train(cc);
    if (eval->parsed()) return gridflow::cmd_evaluate(cc);
    if (report->parsed()) return gridflow::cmd_report(cc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
