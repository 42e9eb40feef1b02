#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "df/config.hpp"
#include "df/frame_layout.hpp"
#include "df/head_types.hpp"
#include "df/numerics.hpp"

namespace df {

class OrderingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Keys and values of one frame for one head, HW x head_dim each.
struct FrameBlock {
  std::size_t frame_id = 0;
  Matrix keys;
  Matrix values;
};

enum class PolicyKind { baseline_window, sink_only, neighbor_window, dummy_empty, dummy_packed };

std::string_view to_string(PolicyKind kind) noexcept;

struct CachePolicy {
  PolicyKind kind = PolicyKind::baseline_window;
  std::size_t window_len = 2;
  std::size_t sink_frame = 0;
  /// Context-extension neighbor window (past frames), replaces L-1.
  std::optional<std::size_t> extended_window;

  /// Past frames retained once the history is long enough.
  std::size_t past_capacity() const noexcept;

  /// Throws ConfigError when the policy invariants do not hold.
  void validate() const;

  friend bool operator==(const CachePolicy&, const CachePolicy&) = default;
};

/// Policy for a head of the given class. `extended_window` only applies to
/// neighbor heads (see extended_neighbor_window).
CachePolicy derive_policy(HeadClass cls, const SessionConfig& config,
                          std::optional<std::size_t> extended_window = std::nullopt);

/// Baseline policy used by every head in baseline mode.
CachePolicy baseline_policy(const SessionConfig& config);

/// Per-neighbor-head window when the past-frame budget of the baseline
/// (total_heads * window_len) minus what sink and dummy heads keep is split
/// evenly over the neighbor heads. Never below window_len - 1. Unset when
/// there are no neighbor heads.
std::optional<std::size_t> extended_neighbor_window(const ClassCounts& counts,
                                                    const SessionConfig& config);

/// Policies for every head of a session under `assignment`, honoring the
/// context-extension and merged-window settings of `config`.
std::vector<CachePolicy> derive_policies(const HeadAssignment& assignment,
                                         const SessionConfig& config);

struct GatheredContext {
  Matrix keys;
  Matrix values;
  FrameLayout layout;
  std::vector<std::size_t> frame_ids;  // includes the current frame last
};

/// One head's cached frames, retained according to its policy.
class HeadKVCache {
 public:
  HeadKVCache() = default;
  explicit HeadKVCache(CachePolicy policy);

  const CachePolicy& policy() const noexcept { return policy_; }
  const std::vector<FrameBlock>& blocks() const noexcept { return blocks_; }
  std::vector<std::size_t> frame_ids() const;
  std::size_t cached_frames() const noexcept { return blocks_.size(); }
  std::size_t cached_tokens() const noexcept;

  /// Appends `block` and applies retention. Throws OrderingError unless the
  /// frame id is greater than every frame previously appended.
  void append_and_evict(FrameBlock block);

  /// Cached blocks in frame order followed by `current`.
  GatheredContext gather_context(const FrameBlock& current) const;

  /// A cache with `policy` holding what this cache's blocks retain under it.
  HeadKVCache rebuilt_with(CachePolicy policy) const;

 private:
  void evict();

  CachePolicy policy_;
  std::vector<FrameBlock> blocks_;
  std::optional<std::size_t> last_frame_;
};

struct CacheStats {
  std::vector<double> past_frames_per_head;
  std::size_t total_cached_tokens = 0;
  double baseline_past_frames = 0.0;
  double reduction_ratio = 1.0;
};

/// sum(past frames) / (heads * baseline past frames).
double reduction_ratio(std::span<const double> past_frames_per_head, double baseline_past_frames);

/// Warm-state cache accounting for `assignment` under `config`.
CacheStats cache_stats(const HeadAssignment& assignment, const SessionConfig& config);

/// Warm-state accounting for explicit per-head policies.
CacheStats cache_stats(std::span<const CachePolicy> policies, const SessionConfig& config);

}  // namespace df
