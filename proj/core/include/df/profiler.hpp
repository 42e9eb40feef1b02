#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "df/config.hpp"
#include "df/frame_layout.hpp"
#include "df/numerics.hpp"

namespace df {

class Workload;

/// Share of attention mass on the sink, neighbor and current-frame regions.
struct FrameAttentionScore {
  double sink = 0.0;
  double neighbor = 0.0;
  double current = 0.0;

  double sum() const noexcept { return sink + neighbor + current; }
  std::array<double, 3> as_array() const noexcept { return {sink, neighbor, current}; }
  friend bool operator==(const FrameAttentionScore&, const FrameAttentionScore&) = default;
};

/// Region sums of `map` averaged over its rows. `map` has one row per
/// (possibly subsampled) query and one column per key token of `layout`.
FrameAttentionScore frame_attention_scores(const Matrix& map, const FrameLayout& layout);

/// Evenly strided row subset: floor(ratio * rows) indices i * rows / count.
/// Throws ConfigError when that count is zero or ratio is outside (0, 1].
std::vector<std::size_t> strided_rows(std::size_t rows, double ratio);

/// Scores of one head: the attention map of the strided query subset
/// against every key of `keys`, reduced over `layout`.
FrameAttentionScore head_frame_scores(const Matrix& queries, const Matrix& keys,
                                      const FrameLayout& layout, double subsample_ratio);

/// Frame attention scores of every head. Row index is the flat head index
/// layer * num_heads + head; columns are (sink, neighbor, current).
class GlobalFrameScore {
 public:
  GlobalFrameScore() = default;
  GlobalFrameScore(std::size_t num_layers, std::size_t num_heads);
  /// Wraps an existing total_heads x 3 matrix of finite, non-negative
  /// entries. Rows need not be normalized.
  GlobalFrameScore(Matrix scores, std::size_t num_heads);

  std::size_t total_heads() const noexcept { return scores_.rows(); }
  std::size_t num_heads() const noexcept { return num_heads_; }
  std::size_t num_layers() const noexcept { return num_heads_ ? scores_.rows() / num_heads_ : 0; }

  FrameAttentionScore row(std::size_t flat) const;
  void set_row(std::size_t flat, const FrameAttentionScore& s);
  const Matrix& matrix() const noexcept { return scores_; }

  /// True when every row sums to 1 within `tol`.
  bool rows_normalized(double tol = 1e-6) const;

  /// Entry-wise mean of several score matrices of identical shape.
  static GlobalFrameScore average(std::span<const GlobalFrameScore> parts);

  friend bool operator==(const GlobalFrameScore&, const GlobalFrameScore&) = default;

 private:
  Matrix scores_;
  std::size_t num_heads_ = 0;
};

/// Up to N dummy-head locations, stored by flat head index in selection
/// order.
class HeadIndexSet {
 public:
  HeadIndexSet() = default;
  HeadIndexSet(std::vector<std::size_t> flat, std::size_t num_heads);

  std::size_t size() const noexcept { return flat_.size(); }
  std::size_t num_heads() const noexcept { return num_heads_; }
  const std::vector<std::size_t>& flat() const noexcept { return flat_; }
  std::vector<std::size_t> sorted() const;
  bool contains(std::size_t flat) const;
  std::size_t layer_of(std::size_t i) const { return flat_.at(i) / num_heads_; }
  std::size_t head_of(std::size_t i) const { return flat_.at(i) % num_heads_; }

 private:
  std::vector<std::size_t> flat_;
  std::size_t num_heads_ = 1;
};

/// Heads with the N largest current-frame scores, ties to the lower index.
HeadIndexSet top_n_current(const GlobalFrameScore& scores, std::size_t n);

/// |I_1 ∩ ... ∩ I_C| / N. All sets must share N >= 1.
double core_set_ratio(std::span<const HeadIndexSet> sets);

/// Runs `workload` in baseline mode up to `probe` and returns the frame
/// attention scores measured there with the given query subsample ratio.
GlobalFrameScore global_scores(const Workload& workload, const SessionConfig& config,
                               const ProbePoint& probe, double subsample_ratio);

/// Mean of global_scores over several probe points.
GlobalFrameScore averaged_global_scores(const Workload& workload, const SessionConfig& config,
                                        std::span<const ProbePoint> probes,
                                        double subsample_ratio);

}  // namespace df
