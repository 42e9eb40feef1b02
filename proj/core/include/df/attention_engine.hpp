#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "df/config.hpp"
#include "df/head_types.hpp"
#include "df/kv_cache.hpp"
#include "df/numerics.hpp"

namespace df {

enum class Mode { baseline, hma, packed };

std::string_view to_string(Mode mode) noexcept;
std::optional<Mode> mode_from_string(std::string_view s) noexcept;

class PackingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a head's cache policy does not match what the path requires.
class PolicyMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// One attention call over a group of heads that share a context length.
struct KernelCall {
  std::vector<std::size_t> heads;  // in-layer head indices, ascending
  std::size_t context_tokens = 0;
};

/// What one head saw and produced during a layer step.
struct HeadTrace {
  std::size_t head = 0;
  const GatheredContext* context = nullptr;
  const Matrix* output = nullptr;
};

using HeadTraceFn = std::function<void(const HeadTrace&)>;

struct LayerStepResult {
  std::vector<Matrix> outputs;  // original head order
  std::vector<KernelCall> calls;
  std::uint64_t key_token_macs = 0;
  std::size_t kernel_calls() const noexcept { return calls.size(); }
};

/// Inputs of one layer at one attention invocation. All spans are indexed by
/// the in-layer head index.
struct LayerInputs {
  std::span<const Matrix> queries;       // HW x head_dim per head
  std::span<const HeadKVCache> caches;
  std::span<const FrameBlock> current;   // this frame's K/V per head
};

/// Sliding-window step: every head attends to sink, neighbors
/// and the current frame in a single call.
LayerStepResult baseline_step(const LayerInputs& in, const SessionConfig& config,
                              const HeadTraceFn& trace = {});

/// Per-class dispatch: one call per non-empty class group (sink, neighbor,
/// dummy), each head over its own cached context.
LayerStepResult hma_step(const LayerInputs& in, std::span<const HeadClass> classes,
                         const SessionConfig& config, const HeadTraceFn& trace = {});

/// Sink and packed-dummy heads share a two-frame context and run as one
/// call; neighbor heads run as the second.
LayerStepResult packed_step(const LayerInputs& in, std::span<const HeadClass> classes,
                            const SessionConfig& config, const HeadTraceFn& trace = {});

/// Dispatches to the path for `mode`; `classes` is ignored for baseline.
LayerStepResult layer_step(Mode mode, const LayerInputs& in, std::span<const HeadClass> classes,
                           const SessionConfig& config, const HeadTraceFn& trace = {});

}  // namespace df
