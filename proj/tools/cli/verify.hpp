#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "df/session.hpp"

namespace df::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Checks every attention output of a session against plain masked
/// attention over the head's full written history plus the current frame,
/// keeping only the frames the path actually gathered.
class MaskedOracleObserver final : public SessionObserver {
 public:
  explicit MaskedOracleObserver(const SessionConfig& config);

  void on_attention(const AttentionEvent& event) override;
  void on_cache_write(std::size_t layer, std::size_t head, const FrameBlock& block) override;

  double max_abs_error() const noexcept { return max_err_; }
  std::size_t events() const noexcept { return events_; }
  /// Events on the hma or packed path (after classification).
  std::size_t reduced_events() const noexcept { return reduced_events_; }

 private:
  std::size_t num_heads_;
  std::vector<std::vector<FrameBlock>> history_;  // per flat head, frame order
  double max_err_ = 0.0;
  std::size_t events_ = 0;
  std::size_t reduced_events_ = 0;
};

/// Random F matrices of `n` heads; entries are row-normalized uniforms,
/// and every third trial is quantized to tenths to provoke ties.
GlobalFrameScore random_scores(std::size_t total_heads, std::uint64_t seed, std::size_t trial);

/// Greedy vs brute force for every head count 1..max_heads and every N.
std::vector<CheckResult> verify_greedy(std::uint64_t seed, std::size_t trials = 200,
                                       std::size_t max_heads = 10);

/// Random small sessions in hma and packed mode against the masked oracle.
std::vector<CheckResult> verify_equivalence(std::uint64_t seed, std::size_t sessions = 50);

/// Cache accounting identities, warm-up retention and random retention
/// sequences.
std::vector<CheckResult> verify_cache(std::uint64_t seed);

/// Row-stochastic maps reduce to scores summing to 1; uniform maps give the
/// closed-form triple.
std::vector<CheckResult> verify_scores(std::uint64_t seed, std::size_t maps = 1000);

/// suite: greedy | equivalence | cache | scores | all. Throws ConfigError otherwise.
std::vector<CheckResult> run_suite(std::string_view suite, std::uint64_t seed);

/// One "PASS name: detail" / "FAIL name: detail" line per check. Returns
/// true when every check passed.
bool print_results(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace df::cli
