#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "config_io.hpp"
#include "df/session.hpp"

namespace df::cli {

struct SweepRow {
  std::string axis;
  double axis_value = 0.0;
  Mode mode = Mode::baseline;
  std::size_t context_frames = 0;  // baseline context incl. current
  std::size_t dummy_count = 0;
  std::uint64_t key_token_macs = 0;
  std::uint64_t closed_form_macs = 0;
  std::size_t kernel_calls = 0;
  std::uint64_t median_wall_time_ns = 0;
  double cache_ratio = 1.0;
};

/// Key-token MACs of one warm layer step computed from class counts alone:
/// each head attends hw queries to (frames in its context) * hw keys.
std::uint64_t closed_form_layer_macs(Mode mode, const ClassCounts& layer_counts,
                                     const ClassCounts& session_counts, const SessionConfig& config);

struct LayerBench {
  LayerStepResult result;
  std::uint64_t median_ns = 0;
};

/// Times layer 0 at the first warm AR step: caches are filled directly from
/// the workload's projections for every earlier frame, then one layer step
/// runs `reps` times.
LayerBench bench_warm_layer(const Workload& workload, const SessionConfig& config, Mode mode,
                            const HeadAssignment& assignment, std::size_t reps);

/// axis: context_len | dummy_ratio. Rows cover baseline plus
/// config.sweep.modes at every axis value.
std::vector<SweepRow> run_sweep(const RunConfig& config, std::string_view axis);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace df::cli
