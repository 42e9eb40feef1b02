#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace df::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitBadConfig = 2,
  kExitIo = 3,
};

struct CommandOptions {
  std::filesystem::path config;
  std::string mode = "hma";
  std::filesystem::path out;   // empty: stdout where that makes sense
  std::string suite = "all";
  std::string axis = "context_len";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
};

/// Writes F as scores.csv and scores.dftc plus profile.json (per-head
/// scores, greedy classes and the TopN set) into the directory `out`.
int cmd_profile(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Full session in opts.mode; the RunReport JSON goes to opts.out or stdout.
int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Property suites; one PASS/FAIL line per check on `out`.
int cmd_verify(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Sweep CSV along opts.axis to opts.out or stdout.
int cmd_sweep(const CommandOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace df::cli
