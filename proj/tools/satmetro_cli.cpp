#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "satmetro/commands.hpp"

int main(int argc, char **argv) {
  CLI::App app{"Saturation-aware weak-measurement metrology simulator"};
  app.set_version_flag("--version", std::string(satmetro::tool_version()));
  app.require_subcommand(1);

  satmetro::CommandOptions options;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string config, out = ".", pools;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the config's master seed");
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
  };
  auto *fisher = app.add_subcommand("fisher-sweep", "Fisher information versus photon number");
  auto *simulate = app.add_subcommand("simulate", "Write Monte-Carlo frame pools");
  auto *estimate = app.add_subcommand("estimate", "Maximum-likelihood B from each frame pool");
  auto *precision = app.add_subcommand("precision-sweep", "Bootstrap precision versus photon number");
  for (auto *sub : {fisher, simulate, estimate, precision})
    add_common(sub);
  for (auto *sub : {simulate, estimate, precision})
    sub->add_option("--pools", pools, "Pool directory (default: <out>/pools)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : satmetro::kExitConfig;
  }

  options.config = config;
  options.out_dir = out;
  options.pools_dir = pools;
  for (auto *sub : {fisher, simulate, estimate, precision}) {
    if (!*sub)
      continue;
    if (sub->count("--seed"))
      options.seed = seed;
    if (sub->count("--threads"))
      options.threads = threads;
  }

  if (*fisher)
    return satmetro::cmd_fisher_sweep(options);
  if (*simulate)
    return satmetro::cmd_simulate(options);
  if (*estimate)
    return satmetro::cmd_estimate(options);
  return satmetro::cmd_precision_sweep(options);
}
