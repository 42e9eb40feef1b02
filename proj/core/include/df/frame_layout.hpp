#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace df {

enum class RegionKind { sink, neighbor, current };

std::string_view to_string(RegionKind kind) noexcept;

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct Region {
  RegionKind kind;
  TokenSpan span;
  friend bool operator==(const Region&, const Region&) = default;
};

/// Partition of the key columns of an attention map into sink, neighbor and
/// current-frame regions. Spans are contiguous, disjoint and ordered; there
/// is exactly one current region and at most one sink region.
class FrameLayout {
 public:
  FrameLayout() = default;
  FrameLayout(std::size_t hw, std::vector<Region> regions);

  /// Layout for frames laid out in order, each frame `hw` tokens wide.
  static FrameLayout from_frames(std::size_t hw, const std::vector<RegionKind>& frame_kinds);

  /// The canonical full-window layout: sink, (window_len - 1) neighbors,
  /// current.
  static FrameLayout full_window(std::size_t hw, std::size_t window_len);

  std::size_t hw() const noexcept { return hw_; }
  const std::vector<Region>& regions() const noexcept { return regions_; }
  std::size_t total_tokens() const noexcept;
  std::size_t tokens_of(RegionKind kind) const noexcept;

  friend bool operator==(const FrameLayout&, const FrameLayout&) = default;

 private:
  std::size_t hw_ = 0;
  std::vector<Region> regions_;
};

}  // namespace df
