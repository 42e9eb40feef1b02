#include "df/frame_layout.hpp"

#include <stdexcept>
#include <string>

#include "df/numerics.hpp"

namespace df {

std::string_view to_string(RegionKind kind) noexcept {
  switch (kind) {
    case RegionKind::sink: return "sink";
    case RegionKind::neighbor: return "neighbor";
    case RegionKind::current: return "current";
  }
  return "?";
}

FrameLayout::FrameLayout(std::size_t hw, std::vector<Region> regions)
    : hw_(hw), regions_(std::move(regions)) {
  std::size_t cursor = 0;
  int currents = 0;
  int sinks = 0;
  for (const auto& r : regions_) {
    if (r.span.begin != cursor || r.span.end <= r.span.begin) {
      throw ShapeError("frame layout: regions must be contiguous and non-empty");
    }
    cursor = r.span.end;
    currents += r.kind == RegionKind::current;
    sinks += r.kind == RegionKind::sink;
  }
  if (currents != 1) throw ShapeError("frame layout: exactly one current region required");
  if (sinks > 1) throw ShapeError("frame layout: at most one sink region allowed");
}

FrameLayout FrameLayout::from_frames(std::size_t hw, const std::vector<RegionKind>& frame_kinds) {
  std::vector<Region> regions;
  std::size_t cursor = 0;
  for (RegionKind kind : frame_kinds) {
    if (!regions.empty() && regions.back().kind == kind) {
      regions.back().span.end += hw;
    } else {
      regions.push_back({kind, {cursor, cursor + hw}});
    }
    cursor += hw;
  }
  return FrameLayout(hw, std::move(regions));
}

FrameLayout FrameLayout::full_window(std::size_t hw, std::size_t window_len) {
  std::vector<RegionKind> kinds;
  kinds.push_back(RegionKind::sink);
  for (std::size_t i = 1; i < window_len; ++i) kinds.push_back(RegionKind::neighbor);
  kinds.push_back(RegionKind::current);
  return from_frames(hw, kinds);
}

std::size_t FrameLayout::total_tokens() const noexcept {
  return regions_.empty() ? 0 : regions_.back().span.end;
}

std::size_t FrameLayout::tokens_of(RegionKind kind) const noexcept {
  std::size_t n = 0;
  for (const auto& r : regions_)
    if (r.kind == kind) n += r.span.size();
  return n;
}

}  // namespace df
