#include "sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "df/head_programming.hpp"

namespace df::cli {

namespace {

std::uint64_t median(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

SweepRow bench_row(const RunConfig& rc, const GlobalFrameScore& scores, Mode mode,
                   std::string_view axis, double axis_value) {
  const SessionConfig& c = rc.session;
  auto workload = make_workload(rc);
  const HeadAssignment assignment = greedy_classify(scores, c.dummy_count).assignment;
  const auto bench = bench_warm_layer(*workload, c, mode, assignment, rc.reps);

  SweepRow row;
  row.axis = axis;
  row.axis_value = axis_value;
  row.mode = mode;
  row.context_frames = c.window_len + 1;
  row.dummy_count = c.dummy_count;
  row.key_token_macs = bench.result.key_token_macs;
  row.kernel_calls = bench.result.kernel_calls();
  row.median_wall_time_ns = bench.median_ns;
  const ClassCounts layer0 = assignment.per_layer_counts(c.num_heads).front();
  row.closed_form_macs = closed_form_layer_macs(mode, layer0, assignment.counts(), c);
  row.cache_ratio = mode == Mode::baseline ? 1.0 : cache_stats(assignment, c).reduction_ratio;
  return row;
}

}  // namespace

std::uint64_t closed_form_layer_macs(Mode mode, const ClassCounts& layer_counts,
                                     const ClassCounts& session_counts, const SessionConfig& c) {
  const std::uint64_t per_frame = static_cast<std::uint64_t>(c.hw) * c.hw * c.head_dim;
  const std::uint64_t heads = layer_counts.total();
  if (mode == Mode::baseline) return heads * (c.window_len + 1) * per_frame;

  std::uint64_t sink_frames = 2;
  std::uint64_t neighbor_frames = c.window_len;
  if (c.merged_window) {
    sink_frames = neighbor_frames = *c.merged_window + 1;
  } else if (c.context_extension && session_counts.neighbor > 0) {
    const std::uint64_t budget = session_counts.total() * c.window_len;
    const std::uint64_t used = session_counts.sink + (c.packing_enabled ? session_counts.dummy : 0);
    neighbor_frames = std::max<std::uint64_t>((budget - used) / session_counts.neighbor,
                                              c.window_len - 1) + 1;
  }
  const std::uint64_t dummy_frames = c.packing_enabled ? 2 : 1;
  return (layer_counts.sink * sink_frames + layer_counts.neighbor * neighbor_frames +
          layer_counts.dummy * dummy_frames) * per_frame;
}

LayerBench bench_warm_layer(const Workload& workload, const SessionConfig& config, Mode mode,
                            const HeadAssignment& assignment, std::size_t reps) {
  const std::size_t heads = config.num_heads;
  std::vector<CachePolicy> policies;
  if (mode == Mode::baseline) {
    policies.assign(heads, baseline_policy(config));
  } else {
    const auto all = derive_policies(assignment, config);
    policies.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(heads));
  }
  std::size_t warm = config.sink_frame + 1;
  for (const auto& p : policies) warm = std::max(warm, p.past_capacity() + 1);

  const std::size_t dn = config.denoise_steps - 1;
  auto project = [&](std::size_t frame) {
    return workload.project(0, workload.denoise_input(workload.initial_frame(frame), frame, dn),
                            frame, dn);
  };

  std::vector<HeadKVCache> caches;
  for (const auto& p : policies) caches.emplace_back(p);
  for (std::size_t f = 0; f < warm; ++f) {
    auto qkv = project(f);
    for (std::size_t h = 0; h < heads; ++h) {
      caches[h].append_and_evict(FrameBlock{f, std::move(qkv[h].k), std::move(qkv[h].v)});
    }
  }

  auto qkv = project(warm);
  std::vector<Matrix> queries(heads);
  std::vector<FrameBlock> current(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    queries[h] = std::move(qkv[h].q);
    current[h] = FrameBlock{warm, std::move(qkv[h].k), std::move(qkv[h].v)};
  }
  const LayerInputs in{queries, caches, current};
  const auto classes = assignment.layer(0, heads);

  LayerBench out;
  std::vector<std::uint64_t> samples;
  for (std::size_t r = 0; r < std::max<std::size_t>(reps, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    auto result = layer_step(mode, in, classes, config);
    samples.push_back(static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start)
            .count()));
    if (r == 0) out.result = std::move(result);
  }
  out.median_ns = median(samples);
  return out;
}

std::vector<SweepRow> run_sweep(const RunConfig& config, std::string_view axis) {
  std::vector<Mode> modes{Mode::baseline};
  for (auto m : config.sweep.modes)
    if (m != Mode::baseline) modes.push_back(m);

  std::vector<SweepRow> rows;
  if (axis == "context_len") {
    for (auto frames : config.sweep.context_frames) {
      RunConfig rc = config;
      rc.session.window_len = frames - 1;
      if (rc.session.merged_window) rc.session.merged_window = std::min(*rc.session.merged_window, frames - 1);
      rc.session.validate();
      auto workload = make_workload(rc);
      const auto scores = global_scores(*workload, rc.session, rc.session.probe, rc.session.subsample_ratio);
      for (auto m : modes) rows.push_back(bench_row(rc, scores, m, axis, static_cast<double>(frames)));
    }
  } else if (axis == "dummy_ratio") {
    auto workload = make_workload(config);
    const auto scores =
        global_scores(*workload, config.session, config.session.probe, config.session.subsample_ratio);
    for (auto ratio : config.sweep.dummy_ratios) {
      RunConfig rc = config;
      rc.session.dummy_count = static_cast<std::size_t>(
          std::floor(ratio * static_cast<double>(rc.session.total_heads()) + 1e-9));
      for (auto m : modes) rows.push_back(bench_row(rc, scores, m, axis, ratio));
    }
  } else {
    throw ConfigError("unknown sweep axis '" + std::string(axis) +
                      "' (expected context_len or dummy_ratio)");
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "axis,axis_value,mode,context_frames,dummy_count,key_token_macs,closed_form_macs,"
         "kernel_calls,median_wall_time_ns,cache_ratio\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << r.axis_value << ',' << to_string(r.mode) << ',' << r.context_frames
        << ',' << r.dummy_count << ',' << r.key_token_macs << ',' << r.closed_form_macs << ','
        << r.kernel_calls << ',' << r.median_wall_time_ns << ',' << r.cache_ratio << '\n';
  }
  return out.str();
}

}  // namespace df::cli
