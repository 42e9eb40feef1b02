#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>

namespace df {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Where in a session the frame attention scores are measured.
struct ProbePoint {
  std::size_t ar_step = 2;                    // 0-based; 2 is the third AR step
  std::optional<std::size_t> denoise_step;    // unset = last denoise iteration
};

struct SessionConfig {
  std::size_t num_layers = 1;
  std::size_t num_heads = 1;
  std::size_t head_dim = 8;
  std::size_t hw = 4;              // tokens per frame
  std::size_t window_len = 3;      // L: 1 sink + (L-1) neighbor frames
  std::size_t sink_frame = 0;
  std::size_t dummy_count = 0;     // N, global across layers
  bool packing_enabled = true;
  std::size_t denoise_steps = 1;
  std::size_t ar_steps = 4;        // T

  /// Neighbor heads absorb the past-frame budget released by sink and dummy
  /// heads.
  bool context_extension = false;
  /// When set, sink and neighbor heads are not split: every non-dummy head
  /// keeps a baseline window of this length (1 sink + n-1 neighbors).
  std::optional<std::size_t> merged_window;

  ProbePoint probe;
  double subsample_ratio = 0.25;

  std::size_t total_heads() const noexcept { return num_layers * num_heads; }
  std::size_t probe_denoise_step() const noexcept {
    return probe.denoise_step.value_or(denoise_steps - 1);
  }

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

}  // namespace df
