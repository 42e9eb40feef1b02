#include "df/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "df/session.hpp"

namespace df {

FrameAttentionScore frame_attention_scores(const Matrix& map, const FrameLayout& layout) {
  if (map.cols() != layout.total_tokens()) {
    throw ShapeError("frame scores: map has " + std::to_string(map.cols()) +
                     " key columns, layout covers " + std::to_string(layout.total_tokens()));
  }
  if (map.rows() == 0) throw ShapeError("frame scores: map has no query rows");
  std::array<double, 3> totals{0.0, 0.0, 0.0};
  for (std::size_t u = 0; u < map.rows(); ++u) {
    const auto row = map.row(u);
    for (const auto& region : layout.regions()) {
      double s = 0.0;
      for (std::size_t v = region.span.begin; v < region.span.end; ++v) s += row[v];
      totals[static_cast<std::size_t>(region.kind)] += s;
    }
  }
  const double inv = 1.0 / static_cast<double>(map.rows());
  return {totals[0] * inv, totals[1] * inv, totals[2] * inv};
}

std::vector<std::size_t> strided_rows(std::size_t rows, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("subsample ratio must be in (0, 1]");
  const auto count = std::min(
      rows, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(rows) + 1e-9)));
  if (count == 0) {
    throw ConfigError("subsample ratio " + std::to_string(ratio) + " selects no query out of " +
                      std::to_string(rows));
  }
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = i * rows / count;
  return out;
}

FrameAttentionScore head_frame_scores(const Matrix& queries, const Matrix& keys,
                                      const FrameLayout& layout, double subsample_ratio) {
  const auto picks = strided_rows(queries.rows(), subsample_ratio);
  Matrix sampled(picks.size(), queries.cols());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto src = queries.row(picks[i]);
    std::copy(src.begin(), src.end(), sampled.row(i).begin());
  }
  AttentionOptions opts;
  opts.want_map = true;
  const auto out = attention(sampled, keys, Matrix(keys.rows(), 0), opts);
  return frame_attention_scores(*out.map, layout);
}

GlobalFrameScore::GlobalFrameScore(std::size_t num_layers, std::size_t num_heads)
    : scores_(num_layers * num_heads, 3), num_heads_(num_heads) {}

GlobalFrameScore::GlobalFrameScore(Matrix scores, std::size_t num_heads)
    : scores_(std::move(scores)), num_heads_(num_heads) {
  if (scores_.cols() != 3) throw ShapeError("global frame score needs 3 columns");
  if (num_heads_ == 0 || scores_.rows() % num_heads_ != 0) {
    throw ShapeError("global frame score rows not a multiple of num_heads");
  }
  for (double x : scores_.data()) {
    if (!std::isfinite(x) || x < 0.0) throw ShapeError("global frame score entries must be >= 0");
  }
}

FrameAttentionScore GlobalFrameScore::row(std::size_t flat) const {
  return {scores_(flat, 0), scores_(flat, 1), scores_(flat, 2)};
}

void GlobalFrameScore::set_row(std::size_t flat, const FrameAttentionScore& s) {
  scores_(flat, 0) = s.sink;
  scores_(flat, 1) = s.neighbor;
  scores_(flat, 2) = s.current;
}

bool GlobalFrameScore::rows_normalized(double tol) const {
  for (std::size_t h = 0; h < total_heads(); ++h)
    if (std::abs(row(h).sum() - 1.0) > tol) return false;
  return true;
}

GlobalFrameScore GlobalFrameScore::average(std::span<const GlobalFrameScore> parts) {
  if (parts.empty()) throw ShapeError("average of no score matrices");
  GlobalFrameScore out(parts.front().num_layers(), parts.front().num_heads());
  for (const auto& p : parts) {
    if (p.total_heads() != out.total_heads()) throw ShapeError("score matrices differ in shape");
    for (std::size_t i = 0; i < p.scores_.size(); ++i) out.scores_.data()[i] += p.scores_.data()[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& x : out.scores_.data()) x *= inv;
  return out;
}

HeadIndexSet::HeadIndexSet(std::vector<std::size_t> flat, std::size_t num_heads)
    : flat_(std::move(flat)), num_heads_(num_heads) {
  if (num_heads_ == 0) throw ShapeError("head index set needs num_heads >= 1");
  auto s = sorted();
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw ShapeError("head index set has duplicate entries");
  }
}

std::vector<std::size_t> HeadIndexSet::sorted() const {
  auto s = flat_;
  std::sort(s.begin(), s.end());
  return s;
}

bool HeadIndexSet::contains(std::size_t flat) const {
  return std::find(flat_.begin(), flat_.end(), flat) != flat_.end();
}

HeadIndexSet top_n_current(const GlobalFrameScore& scores, std::size_t n) {
  const std::size_t total = scores.total_heads();
  if (n > total) {
    throw ConfigError("top_n_current: N=" + std::to_string(n) + " exceeds " +
                      std::to_string(total) + " heads");
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  const Matrix& f = scores.matrix();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return f(a, 2) > f(b, 2); });
  order.resize(n);
  return HeadIndexSet(std::move(order), std::max<std::size_t>(scores.num_heads(), 1));
}

double core_set_ratio(std::span<const HeadIndexSet> sets) {
  if (sets.empty()) throw ConfigError("core_set_ratio: no sets");
  const std::size_t n = sets.front().size();
  if (n == 0) throw ConfigError("core_set_ratio: N must be >= 1");
  std::vector<std::size_t> common = sets.front().sorted();
  for (const auto& s : sets.subspan(1)) {
    if (s.size() != n) {
      throw ConfigError("core_set_ratio: sets of size " + std::to_string(s.size()) + " and " +
                        std::to_string(n));
    }
    const auto other = s.sorted();
    std::vector<std::size_t> next;
    std::set_intersection(common.begin(), common.end(), other.begin(), other.end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  return static_cast<double>(common.size()) / static_cast<double>(n);
}

GlobalFrameScore global_scores(const Workload& workload, const SessionConfig& config,
                               const ProbePoint& probe, double subsample_ratio) {
  SessionConfig probe_config = config;
  probe_config.probe = probe;
  probe_config.subsample_ratio = subsample_ratio;
  probe_config.ar_steps = probe.ar_step + 1;
  SessionOptions options;
  options.collect_scores = true;
  auto result = generate_session(workload, probe_config, Mode::baseline, options);
  return std::move(*result.scores);
}

GlobalFrameScore averaged_global_scores(const Workload& workload, const SessionConfig& config,
                                        std::span<const ProbePoint> probes,
                                        double subsample_ratio) {
  std::vector<GlobalFrameScore> parts;
  parts.reserve(probes.size());
  for (const auto& p : probes) parts.push_back(global_scores(workload, config, p, subsample_ratio));
  return GlobalFrameScore::average(parts);
}

}  // namespace df
