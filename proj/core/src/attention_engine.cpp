#include "df/attention_engine.hpp"

#include <string>

#include "df/parallel.hpp"

namespace df {

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::hma: return "hma";
    case Mode::packed: return "packed";
  }
  return "?";
}

std::optional<Mode> mode_from_string(std::string_view s) noexcept {
  if (s == "baseline") return Mode::baseline;
  if (s == "hma") return Mode::hma;
  if (s == "packed") return Mode::packed;
  return std::nullopt;
}

namespace {

void check_inputs(const LayerInputs& in, const SessionConfig& config) {
  if (in.queries.size() != config.num_heads || in.caches.size() != config.num_heads ||
      in.current.size() != config.num_heads) {
    throw ShapeError("layer step: expected " + std::to_string(config.num_heads) +
                     " heads of queries, caches and current blocks");
  }
}

void check_classes(std::span<const HeadClass> classes, const SessionConfig& config) {
  if (classes.size() != config.num_heads) {
    throw AssignmentError("layer step: " + std::to_string(classes.size()) + " head classes for " +
                          std::to_string(config.num_heads) + " heads");
  }
}

bool policy_matches(HeadClass cls, const CachePolicy& p, const SessionConfig& config) {
  if (cls == HeadClass::dummy) {
    return p.kind == PolicyKind::dummy_empty || p.kind == PolicyKind::dummy_packed;
  }
  if (config.merged_window) return p.kind == PolicyKind::baseline_window;
  return cls == HeadClass::sink ? p.kind == PolicyKind::sink_only
                                : p.kind == PolicyKind::neighbor_window;
}

// Executes one attention call for `heads`, writing into result.outputs.
void run_call(const LayerInputs& in, std::vector<std::size_t> heads, bool require_equal_length,
              LayerStepResult& result, const HeadTraceFn& trace) {
  if (heads.empty()) return;
  std::vector<GatheredContext> contexts(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::size_t h = heads[i];
    contexts[i] = in.caches[h].gather_context(in.current[h]);
  }
  const std::size_t len = contexts.front().keys.rows();
  if (require_equal_length) {
    for (std::size_t i = 1; i < contexts.size(); ++i) {
      if (contexts[i].keys.rows() != len) {
        throw PackingError("packed call: head " + std::to_string(heads[i]) + " has " +
                           std::to_string(contexts[i].keys.rows()) + " context tokens, head " +
                           std::to_string(heads.front()) + " has " + std::to_string(len));
      }
    }
  }
  parallel_for(heads.size(), [&](std::size_t i) {
    const std::size_t h = heads[i];
    result.outputs[h] = attention(in.queries[h], contexts[i].keys, contexts[i].values).output;
  });
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::size_t h = heads[i];
    result.key_token_macs +=
        key_token_macs(in.queries[h].rows(), contexts[i].keys.rows(), in.queries[h].cols());
    if (trace) trace(HeadTrace{h, &contexts[i], &result.outputs[h]});
  }
  result.calls.push_back(KernelCall{std::move(heads), len});
}

}  // namespace

LayerStepResult baseline_step(const LayerInputs& in, const SessionConfig& config,
                              const HeadTraceFn& trace) {
  check_inputs(in, config);
  std::vector<std::size_t> heads;
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    if (in.caches[h].policy().kind != PolicyKind::baseline_window) {
      throw PolicyMismatchError("baseline step: head " + std::to_string(h) + " uses policy " +
                                std::string(to_string(in.caches[h].policy().kind)));
    }
    heads.push_back(h);
  }
  LayerStepResult result;
  result.outputs.resize(config.num_heads);
  run_call(in, std::move(heads), false, result, trace);
  return result;
}

LayerStepResult hma_step(const LayerInputs& in, std::span<const HeadClass> classes,
                         const SessionConfig& config, const HeadTraceFn& trace) {
  check_inputs(in, config);
  check_classes(classes, config);
  std::vector<std::size_t> groups[3];
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    if (!policy_matches(classes[h], in.caches[h].policy(), config)) {
      throw PolicyMismatchError("hma step: head " + std::to_string(h) + " of class " +
                                std::string(to_string(classes[h])) + " holds a " +
                                std::string(to_string(in.caches[h].policy().kind)) + " cache");
    }
    groups[static_cast<int>(classes[h])].push_back(h);
  }
  LayerStepResult result;
  result.outputs.resize(config.num_heads);
  for (auto& g : groups) run_call(in, std::move(g), false, result, trace);
  return result;
}

LayerStepResult packed_step(const LayerInputs& in, std::span<const HeadClass> classes,
                            const SessionConfig& config, const HeadTraceFn& trace) {
  check_inputs(in, config);
  check_classes(classes, config);
  if (!config.packing_enabled) throw ConfigError("packed step requires packing_enabled");
  std::vector<std::size_t> packed, neighbors;
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    const auto& policy = in.caches[h].policy();
    if (!policy_matches(classes[h], policy, config) ||
        (classes[h] == HeadClass::dummy && policy.kind != PolicyKind::dummy_packed)) {
      throw PolicyMismatchError("packed step: head " + std::to_string(h) + " of class " +
                                std::string(to_string(classes[h])) + " holds a " +
                                std::string(to_string(policy.kind)) + " cache");
    }
    (classes[h] == HeadClass::neighbor ? neighbors : packed).push_back(h);
  }
  LayerStepResult result;
  result.outputs.resize(config.num_heads);
  run_call(in, std::move(packed), true, result, trace);
  run_call(in, std::move(neighbors), false, result, trace);
  return result;
}

LayerStepResult layer_step(Mode mode, const LayerInputs& in, std::span<const HeadClass> classes,
                           const SessionConfig& config, const HeadTraceFn& trace) {
  switch (mode) {
    case Mode::baseline: return baseline_step(in, config, trace);
    case Mode::hma: return hma_step(in, classes, config, trace);
    case Mode::packed: return packed_step(in, classes, config, trace);
  }
  throw ConfigError("unknown mode");
}

}  // namespace df
