#include <iostream>

#include <CLI11.hpp>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace df::cli;

  CLI::App app{"Head-classified KV caching for autoregressive frame attention"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;
  std::size_t reps = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "JSON config file")->required();
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--reps", reps, "Timing repetitions");
  };

  auto* profile = app.add_subcommand("profile", "Measure frame attention scores and classify heads");
  add_common(profile);
  profile->add_option("--out", opts.out, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Generate a session and write a run report");
  add_common(run);
  run->add_option("--mode", opts.mode, "baseline | hma | packed")
      ->check(CLI::IsMember({"baseline", "hma", "packed"}));
  run->add_option("--out", opts.out, "Report path (default: stdout)");

  auto* verify = app.add_subcommand("verify", "Run property suites");
  verify->add_option("--suite", opts.suite, "greedy | equivalence | cache | scores | all")
      ->check(CLI::IsMember({"greedy", "equivalence", "cache", "scores", "all"}));
  verify->add_option("--seed", seed, "Seed for random cases");

  auto* sweep = app.add_subcommand("sweep", "Single-layer timing sweep to CSV");
  add_common(sweep);
  sweep->add_option("--axis", opts.axis, "context_len | dummy_ratio")
      ->check(CLI::IsMember({"context_len", "dummy_ratio"}));
  sweep->add_option("--out", opts.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  auto* active = app.get_subcommands().front();
  if (active->count("--seed")) opts.seed = seed;
  if (active->get_option_no_throw("--reps") && active->count("--reps")) opts.reps = reps;

  if (active == profile) return cmd_profile(opts, std::cout, std::cerr);
  if (active == run) return cmd_run(opts, std::cout, std::cerr);
  if (active == verify) return cmd_verify(opts, std::cout, std::cerr);
  return cmd_sweep(opts, std::cout, std::cerr);
}
