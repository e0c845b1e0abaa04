#include "fbnash/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace fbnash::cli;
  CLI::App app{"Open-loop Nash equilibria of FBSDE-driven stochastic differential games"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON run configuration")->required();
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", opts.threads, "worker threads (speed only)")->check(CLI::PositiveNumber);
  };
  auto* solve = app.add_subcommand("solve", "compute and certify an equilibrium");
  common(solve);
  auto* verify = app.add_subcommand("verify", "check supplied controls");
  common(verify);
  verify->add_option("--controls", opts.controls, "controls CSV (step, scenario_id, u1_*, u2_*)")->required();
  auto* oracle = app.add_subcommand("oracle", "brute-force grid Nash search on the lattice");
  common(oracle);
  oracle->add_option("--report", opts.report, "report.json of a solve run to compare against");
  auto* check = app.add_subcommand("check", "derivative and growth checks");
  common(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadInput;
  }
  for (auto* sub : {solve, verify, oracle, check}) {
    if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
  }

  if (solve->parsed()) return cmd_solve(opts);
  if (verify->parsed()) return cmd_verify(opts);
  if (oracle->parsed()) return cmd_oracle(opts);
  return cmd_check(opts);
}
