#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "df/attention_engine.hpp"
#include "df/config.hpp"
#include "df/head_types.hpp"
#include "df/kv_cache.hpp"
#include "df/numerics.hpp"
#include "df/profiler.hpp"

namespace df {

struct HeadQKV {
  Matrix q;
  Matrix k;
  Matrix v;
};

/// Source of per-layer Q/K/V for an autoregressive frame loop. A frame is
/// HW x model_dim; each AR step starts from initial_frame and runs
/// denoise_steps forward passes.
class Workload {
 public:
  virtual ~Workload() = default;

  /// Throws ConfigError if the session shape disagrees with the workload.
  virtual void check_compatible(const SessionConfig& config) const = 0;

  virtual Matrix initial_frame(std::size_t ar_step) const = 0;

  /// Input of denoise iteration `denoise_step` given the previous iterate.
  virtual Matrix denoise_input(const Matrix& frame, std::size_t ar_step,
                               std::size_t denoise_step) const = 0;

  virtual std::vector<HeadQKV> project(std::size_t layer, const Matrix& hidden,
                                       std::size_t ar_step, std::size_t denoise_step) const = 0;

  virtual Matrix combine(std::size_t layer, const Matrix& hidden,
                         std::span<const Matrix> head_outputs) const = 0;
};

struct AttentionEvent {
  std::size_t ar_step;
  std::size_t denoise_step;
  std::size_t layer;
  std::size_t head;
  Mode path;  // baseline until the head assignment takes effect
  const Matrix& queries;
  const GatheredContext& context;
  const Matrix& output;
};

class SessionObserver {
 public:
  virtual ~SessionObserver() = default;
  virtual void on_attention(const AttentionEvent&) {}
  virtual void on_cache_write(std::size_t /*layer*/, std::size_t /*head*/, const FrameBlock&) {}
};

struct StepRecord {
  std::size_t ar_step = 0;
  Mode path = Mode::baseline;
  std::uint64_t key_token_macs = 0;              // all layers and denoise iterations
  std::vector<std::size_t> kernel_calls_per_layer;
  /// Attention + cache time per (denoise_step, layer) invocation, in order.
  std::vector<std::uint64_t> attention_ns;
};

struct SessionOptions {
  SessionObserver* observer = nullptr;
  /// Use this assignment from the first step instead of profiling.
  std::optional<HeadAssignment> assignment;
  /// Measure frame attention scores at config.probe even in baseline mode.
  bool collect_scores = false;
};

struct SessionResult {
  std::vector<Matrix> frames;
  std::vector<StepRecord> steps;
  std::optional<GlobalFrameScore> scores;
  std::optional<HeadAssignment> assignment;
  double objective = 0.0;
  /// Policy and cached frame count per flat head after the last step.
  std::vector<CachePolicy> final_policies;
  std::vector<std::size_t> final_cached_frames;
};

/// Runs config.ar_steps AR steps. In hma/packed mode without a supplied
/// assignment, steps up to and including config.probe.ar_step run the
/// baseline path, scores are measured at the probe point, heads are
/// classified once with the greedy solver, caches are rebuilt under the
/// class policies and the assignment stays fixed for the rest of the
/// session. Caches are written once per AR step from the last denoise
/// iteration.
SessionResult generate_session(const Workload& workload, const SessionConfig& config, Mode mode,
                               const SessionOptions& options = {});

}  // namespace df
