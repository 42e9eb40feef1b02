#include "df/kv_cache.hpp"

#include <algorithm>
#include <string>

namespace df {

std::string_view to_string(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::baseline_window: return "baseline_window";
    case PolicyKind::sink_only: return "sink_only";
    case PolicyKind::neighbor_window: return "neighbor_window";
    case PolicyKind::dummy_empty: return "dummy_empty";
    case PolicyKind::dummy_packed: return "dummy_packed";
  }
  return "?";
}

std::size_t CachePolicy::past_capacity() const noexcept {
  switch (kind) {
    case PolicyKind::baseline_window: return window_len;
    case PolicyKind::sink_only: return 1;
    case PolicyKind::neighbor_window: return extended_window.value_or(window_len - 1);
    case PolicyKind::dummy_empty: return 0;
    case PolicyKind::dummy_packed: return 1;
  }
  return 0;
}

void CachePolicy::validate() const {
  const bool windowed =
      kind == PolicyKind::baseline_window || kind == PolicyKind::neighbor_window;
  if (windowed && window_len < 2) {
    throw ConfigError("cache policy " + std::string(to_string(kind)) + " needs window_len >= 2");
  }
  if (extended_window) {
    if (kind != PolicyKind::neighbor_window) {
      throw ConfigError("extended_window only applies to neighbor_window");
    }
    if (*extended_window + 1 < window_len) {
      throw ConfigError("extended_window must be >= window_len - 1");
    }
  }
}

CachePolicy baseline_policy(const SessionConfig& config) {
  return {PolicyKind::baseline_window, config.window_len, config.sink_frame, std::nullopt};
}

CachePolicy derive_policy(HeadClass cls, const SessionConfig& config,
                          std::optional<std::size_t> extended_window) {
  CachePolicy p{PolicyKind::baseline_window, config.window_len, config.sink_frame, std::nullopt};
  if (cls == HeadClass::dummy) {
    p.kind = config.packing_enabled ? PolicyKind::dummy_packed : PolicyKind::dummy_empty;
    return p;
  }
  if (config.merged_window) {
    p.window_len = *config.merged_window;
    return p;
  }
  if (cls == HeadClass::sink) {
    p.kind = PolicyKind::sink_only;
  } else {
    p.kind = PolicyKind::neighbor_window;
    p.extended_window = extended_window;
  }
  p.validate();
  return p;
}

std::optional<std::size_t> extended_neighbor_window(const ClassCounts& counts,
                                                    const SessionConfig& config) {
  if (counts.neighbor == 0) return std::nullopt;
  const std::size_t budget = counts.total() * config.window_len;
  const std::size_t used = counts.sink + (config.packing_enabled ? counts.dummy : 0);
  const std::size_t per_head = (budget - used) / counts.neighbor;
  return std::max(per_head, config.window_len - 1);
}

std::vector<CachePolicy> derive_policies(const HeadAssignment& assignment,
                                         const SessionConfig& config) {
  std::optional<std::size_t> extended;
  if (config.context_extension) extended = extended_neighbor_window(assignment.counts(), config);
  std::vector<CachePolicy> out;
  out.reserve(assignment.size());
  for (HeadClass c : assignment.classes()) out.push_back(derive_policy(c, config, extended));
  return out;
}

HeadKVCache::HeadKVCache(CachePolicy policy) : policy_(policy) { policy_.validate(); }

std::vector<std::size_t> HeadKVCache::frame_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(blocks_.size());
  for (const auto& b : blocks_) ids.push_back(b.frame_id);
  return ids;
}

std::size_t HeadKVCache::cached_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.keys.rows();
  return n;
}

void HeadKVCache::append_and_evict(FrameBlock block) {
  if (last_frame_ && block.frame_id <= *last_frame_) {
    throw OrderingError("frame " + std::to_string(block.frame_id) +
                        " appended after frame " + std::to_string(*last_frame_));
  }
  if (block.keys.rows() != block.values.rows()) {
    throw ShapeError("frame block keys/values row mismatch");
  }
  last_frame_ = block.frame_id;
  blocks_.push_back(std::move(block));
  evict();
}

void HeadKVCache::evict() {
  const std::size_t sink = policy_.sink_frame;
  auto keep_last = [this](std::size_t n, auto&& eligible) {
    std::vector<bool> keep(blocks_.size(), false);
    std::size_t taken = 0;
    for (std::size_t i = blocks_.size(); i-- > 0 && taken < n;) {
      if (eligible(blocks_[i])) {
        keep[i] = true;
        ++taken;
      }
    }
    return keep;
  };
  auto any = [](const FrameBlock&) { return true; };

  std::vector<bool> keep;
  switch (policy_.kind) {
    case PolicyKind::baseline_window:
      keep = keep_last(policy_.window_len - 1, any);
      for (std::size_t i = 0; i < blocks_.size(); ++i)
        if (blocks_[i].frame_id == sink) keep[i] = true;
      break;
    case PolicyKind::sink_only:
      keep.assign(blocks_.size(), false);
      for (std::size_t i = 0; i < blocks_.size(); ++i) keep[i] = blocks_[i].frame_id == sink;
      break;
    case PolicyKind::neighbor_window:
      keep = keep_last(policy_.past_capacity(),
                       [sink](const FrameBlock& b) { return b.frame_id != sink; });
      break;
    case PolicyKind::dummy_empty:
      keep.assign(blocks_.size(), false);
      break;
    case PolicyKind::dummy_packed:
      keep = keep_last(1, any);
      break;
  }

  std::vector<FrameBlock> kept;
  kept.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (keep[i]) kept.push_back(std::move(blocks_[i]));
  blocks_ = std::move(kept);
}

GatheredContext HeadKVCache::gather_context(const FrameBlock& current) const {
  if (last_frame_ && current.frame_id <= *last_frame_) {
    throw OrderingError("current frame " + std::to_string(current.frame_id) +
                        " is not newer than cached frame " + std::to_string(*last_frame_));
  }
  GatheredContext ctx;
  std::vector<RegionKind> kinds;
  for (const auto& b : blocks_) {
    ctx.keys.append_rows(b.keys);
    ctx.values.append_rows(b.values);
    ctx.frame_ids.push_back(b.frame_id);
    kinds.push_back(b.frame_id == policy_.sink_frame ? RegionKind::sink : RegionKind::neighbor);
  }
  ctx.keys.append_rows(current.keys);
  ctx.values.append_rows(current.values);
  ctx.frame_ids.push_back(current.frame_id);
  kinds.push_back(RegionKind::current);
  ctx.layout = FrameLayout::from_frames(current.keys.rows(), kinds);
  return ctx;
}

HeadKVCache HeadKVCache::rebuilt_with(CachePolicy policy) const {
  HeadKVCache out(policy);
  for (const auto& b : blocks_) out.append_and_evict(b);
  out.last_frame_ = last_frame_;
  return out;
}

double reduction_ratio(std::span<const double> past_frames_per_head, double baseline_past_frames) {
  if (past_frames_per_head.empty() || !(baseline_past_frames > 0.0)) {
    throw ConfigError("reduction_ratio needs at least one head and a positive baseline");
  }
  double sum = 0.0;
  for (double f : past_frames_per_head) sum += f;
  return sum / (static_cast<double>(past_frames_per_head.size()) * baseline_past_frames);
}

CacheStats cache_stats(std::span<const CachePolicy> policies, const SessionConfig& config) {
  CacheStats s;
  s.baseline_past_frames = static_cast<double>(baseline_policy(config).past_capacity());
  s.past_frames_per_head.reserve(policies.size());
  for (const auto& p : policies) {
    const std::size_t frames = p.past_capacity();
    s.past_frames_per_head.push_back(static_cast<double>(frames));
    s.total_cached_tokens += frames * config.hw;
  }
  s.reduction_ratio = reduction_ratio(s.past_frames_per_head, s.baseline_past_frames);
  return s;
}

CacheStats cache_stats(const HeadAssignment& assignment, const SessionConfig& config) {
  const auto policies = derive_policies(assignment, config);
  return cache_stats(policies, config);
}

}  // namespace df
