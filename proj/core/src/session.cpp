#include "df/session.hpp"

#include <chrono>
#include <string>

#include "df/head_programming.hpp"

namespace df {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point start) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count());
}

std::vector<HeadKVCache> make_caches(const std::vector<CachePolicy>& policies) {
  std::vector<HeadKVCache> caches;
  caches.reserve(policies.size());
  for (const auto& p : policies) caches.emplace_back(p);
  return caches;
}

}  // namespace

SessionResult generate_session(const Workload& workload, const SessionConfig& config, Mode mode,
                               const SessionOptions& options) {
  config.validate();
  workload.check_compatible(config);
  if (mode == Mode::packed && !config.packing_enabled) {
    throw ConfigError("packed mode requires packing_enabled");
  }
  if (mode == Mode::packed && config.merged_window) {
    throw ConfigError("packed mode needs separate sink heads; unset merged_window");
  }

  const std::size_t layers = config.num_layers;
  const std::size_t heads = config.num_heads;
  const std::size_t total = config.total_heads();
  const std::size_t probe_step = config.probe.ar_step;
  const std::size_t probe_denoise = config.probe_denoise_step();

  SessionResult result;
  std::optional<HeadAssignment> assignment;
  if (mode != Mode::baseline && options.assignment) {
    if (options.assignment->size() != total) {
      throw AssignmentError("supplied assignment covers " +
                            std::to_string(options.assignment->size()) + " heads, session has " +
                            std::to_string(total));
    }
    assignment = options.assignment;
  }

  std::vector<HeadKVCache> caches =
      assignment ? make_caches(derive_policies(*assignment, config))
                 : make_caches(std::vector<CachePolicy>(total, baseline_policy(config)));

  const bool profile = options.collect_scores || (mode != Mode::baseline && !assignment);
  std::optional<GlobalFrameScore> scores;
  if (profile && probe_step < config.ar_steps) scores.emplace(layers, heads);

  for (std::size_t step = 0; step < config.ar_steps; ++step) {
    const Mode path = assignment ? mode : Mode::baseline;
    StepRecord record;
    record.ar_step = step;
    record.path = path;
    record.kernel_calls_per_layer.assign(layers, 0);
    record.attention_ns.reserve(config.denoise_steps * layers);

    std::vector<FrameBlock> written(total);
    Matrix frame = workload.initial_frame(step);
    for (std::size_t dn = 0; dn < config.denoise_steps; ++dn) {
      Matrix hidden = workload.denoise_input(frame, step, dn);
      const bool probing = scores && step == probe_step && dn == probe_denoise;
      const bool last = dn + 1 == config.denoise_steps;

      for (std::size_t l = 0; l < layers; ++l) {
        auto qkv = workload.project(l, hidden, step, dn);
        if (qkv.size() != heads) throw ShapeError("workload produced wrong head count");
        std::vector<Matrix> queries(heads);
        std::vector<FrameBlock> current(heads);
        for (std::size_t h = 0; h < heads; ++h) {
          queries[h] = std::move(qkv[h].q);
          current[h] = FrameBlock{step, std::move(qkv[h].k), std::move(qkv[h].v)};
        }
        LayerInputs in{queries, std::span<const HeadKVCache>(caches).subspan(l * heads, heads),
                       current};

        HeadTraceFn trace;
        if (options.observer || probing) {
          trace = [&](const HeadTrace& t) {
            if (options.observer) {
              options.observer->on_attention(AttentionEvent{step, dn, l, t.head, path,
                                                            queries[t.head], *t.context,
                                                            *t.output});
            }
            if (probing) {
              scores->set_row(l * heads + t.head,
                              head_frame_scores(queries[t.head], t.context->keys,
                                                t.context->layout, config.subsample_ratio));
            }
          };
        }

        std::span<const HeadClass> classes;
        if (assignment) classes = assignment->layer(l, heads);
        const auto start = Clock::now();
        auto step_result = layer_step(path, in, classes, config, trace);
        record.attention_ns.push_back(elapsed_ns(start));
        record.key_token_macs += step_result.key_token_macs;
        record.kernel_calls_per_layer[l] = step_result.kernel_calls();

        if (last) {
          for (std::size_t h = 0; h < heads; ++h) written[l * heads + h] = std::move(current[h]);
        }
        hidden = workload.combine(l, hidden, step_result.outputs);
      }
      frame = std::move(hidden);
    }

    // Cache writes are timed into the last denoise iteration's layer slots.
    const std::size_t slot0 = (config.denoise_steps - 1) * layers;
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t flat = l * heads + h;
        if (options.observer) options.observer->on_cache_write(l, h, written[flat]);
        const auto start = Clock::now();
        caches[flat].append_and_evict(std::move(written[flat]));
        record.attention_ns[slot0 + l] += elapsed_ns(start);
      }
    }

    result.frames.push_back(std::move(frame));
    result.steps.push_back(std::move(record));

    if (!assignment && mode != Mode::baseline && step == probe_step) {
      auto classification = greedy_classify(*scores, config.dummy_count);
      assignment = std::move(classification.assignment);
      result.objective = classification.objective;
      const auto policies = derive_policies(*assignment, config);
      for (std::size_t f = 0; f < total; ++f) caches[f] = caches[f].rebuilt_with(policies[f]);
    }
  }

  result.scores = std::move(scores);
  result.assignment = std::move(assignment);
  for (const auto& c : caches) {
    result.final_policies.push_back(c.policy());
    result.final_cached_frames.push_back(c.cached_frames());
  }
  return result;
}

}  // namespace df
