#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "df/head_programming.hpp"
#include "df/rng.hpp"
#include "df/scenario.hpp"

namespace df::cli {

namespace {

constexpr std::uint64_t kScoresTag = 0x5C0435;
constexpr std::uint64_t kSessionTag = 0x5E5510;
constexpr std::uint64_t kCacheTag = 0xCAC4E;
constexpr std::uint64_t kMapTag = 0x4A9;

constexpr double kGreedyTol = 1e-12;
constexpr double kEquivalenceTol = 1e-6;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

/// Expected retained ids after appending `history` (ascending) under `p`.
std::vector<std::size_t> expected_retention(const CachePolicy& p,
                                            const std::vector<std::size_t>& history) {
  auto last_n = [](std::vector<std::size_t> ids, std::size_t n) {
    if (ids.size() > n) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n));
    return ids;
  };
  const bool has_sink = std::find(history.begin(), history.end(), p.sink_frame) != history.end();
  std::vector<std::size_t> out;
  switch (p.kind) {
    case PolicyKind::baseline_window:
      out = last_n(history, p.window_len - 1);
      if (has_sink && std::find(out.begin(), out.end(), p.sink_frame) == out.end()) {
        out.insert(out.begin(), p.sink_frame);
      }
      break;
    case PolicyKind::sink_only:
      if (has_sink) out.push_back(p.sink_frame);
      break;
    case PolicyKind::neighbor_window: {
      std::vector<std::size_t> rest;
      for (auto id : history)
        if (id != p.sink_frame) rest.push_back(id);
      out = last_n(rest, p.past_capacity());
      break;
    }
    case PolicyKind::dummy_empty:
      break;
    case PolicyKind::dummy_packed:
      out = last_n(history, 1);
      break;
  }
  return out;
}

FrameBlock tiny_block(std::size_t id) {
  Matrix k(1, 1);
  k(0, 0) = static_cast<double>(id);
  return FrameBlock{id, k, k};
}

}  // namespace

MaskedOracleObserver::MaskedOracleObserver(const SessionConfig& config)
    : num_heads_(config.num_heads), history_(config.total_heads()) {}

void MaskedOracleObserver::on_cache_write(std::size_t layer, std::size_t head,
                                          const FrameBlock& block) {
  history_.at(layer * num_heads_ + head).push_back(block);
}

void MaskedOracleObserver::on_attention(const AttentionEvent& e) {
  ++events_;
  if (e.path != Mode::baseline) ++reduced_events_;
  const auto& history = history_.at(e.layer * num_heads_ + e.head);
  const auto& ids = e.context.frame_ids;
  const std::size_t hw = e.queries.rows();

  // Full history in frame order plus the current frame, which the context
  // carries as its last hw rows.
  Matrix keys;
  Matrix values;
  KeyMask mask;
  auto gathered = [&](std::size_t id) {
    return std::find(ids.begin(), ids.end() - 1, id) != ids.end() - 1;
  };
  std::size_t matched = 0;
  for (const auto& b : history) {
    const bool keep = gathered(b.frame_id);
    matched += keep;
    keys.append_rows(b.keys);
    values.append_rows(b.values);
    mask.insert(mask.end(), b.keys.rows(), keep);
  }
  if (matched + 1 != ids.size()) {
    // The path attended to a frame that was never written.
    max_err_ = std::numeric_limits<double>::infinity();
    return;
  }
  const std::size_t ctx_rows = e.context.keys.rows();
  keys.append_rows(e.context.keys.slice_rows(ctx_rows - hw, hw));
  values.append_rows(e.context.values.slice_rows(ctx_rows - hw, hw));
  mask.insert(mask.end(), hw, true);

  AttentionOptions opts;
  opts.mask = std::move(mask);
  const auto expected = attention(e.queries, keys, values, opts);
  max_err_ = std::max(max_err_, max_abs_diff(expected.output, e.output));
}

GlobalFrameScore random_scores(std::size_t total_heads, std::uint64_t seed, std::size_t trial) {
  Xoshiro256 rng(derive_seed(seed, {kScoresTag, total_heads, trial}));
  const bool quantize = trial % 3 == 2;
  Matrix m(total_heads, 3);
  for (std::size_t h = 0; h < total_heads; ++h) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      double v = rng.uniform01();
      if (quantize) v = std::floor(v * 10.0) / 10.0;
      m(h, c) = v;
      sum += v;
    }
    if (!quantize && sum > 0.0) {
      for (std::size_t c = 0; c < 3; ++c) m(h, c) /= sum;
    }
  }
  return GlobalFrameScore(std::move(m), 1);
}

std::vector<CheckResult> verify_greedy(std::uint64_t seed, std::size_t trials,
                                       std::size_t max_heads) {
  std::vector<CheckResult> out;
  for (std::size_t n = 1; n <= max_heads; ++n) {
    double worst = 0.0;
    std::size_t checks = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto scores = random_scores(n, seed, t);
      for (std::size_t dummies = 0; dummies <= n; ++dummies) {
        const auto g = greedy_classify(scores, dummies);
        const auto b = brute_force_classify(scores, dummies);
        worst = std::max(worst, std::abs(g.objective - b.objective));
        // The greedy objective must also be what its assignment scores.
        worst = std::max(worst, std::abs(g.objective - objective(scores, g.assignment.classes())));
        ++checks;
      }
    }
    out.push_back({"greedy_vs_brute_force heads=" + std::to_string(n), worst <= kGreedyTol,
                   std::to_string(checks) + " checks, max |diff| " + fmt(worst)});
  }
  return out;
}

std::vector<CheckResult> verify_equivalence(std::uint64_t seed, std::size_t sessions) {
  static constexpr std::size_t kHw[] = {8, 16, 32, 64};
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < sessions; ++i) {
    Xoshiro256 rng(derive_seed(seed, {kSessionTag, i}));
    SessionConfig c;
    c.num_layers = 1 + rng.below(4);
    c.num_heads = 1 + rng.below(8);
    c.head_dim = 8;
    c.hw = kHw[rng.below(4)];
    c.window_len = 2 + rng.below(4);
    c.denoise_steps = 1 + rng.below(2);
    c.probe.ar_step = rng.below(3);
    c.ar_steps = c.probe.ar_step + 2 + rng.below(c.window_len + 2);
    c.dummy_count = rng.below(c.total_heads() + 1);
    c.subsample_ratio = 0.5;
    const bool merged = i % 5 == 4;
    if (merged) {
      c.merged_window = 2 + rng.below(3);
    } else {
      c.context_extension = rng.below(2) == 1;
    }

    std::unique_ptr<Workload> workload;
    if (i % 2 == 0) {
      ToyModelSpec spec;
      spec.num_layers = c.num_layers;
      spec.num_heads = c.num_heads;
      spec.head_dim = c.head_dim;
      spec.hw = c.hw;
      spec.denoise_steps = c.denoise_steps;
      spec.seed = derive_seed(seed, {kSessionTag, i, 1});
      workload = std::make_unique<ToyModel>(spec);
    } else {
      PlantedSpec spec;
      const std::size_t total = c.total_heads();
      const std::size_t cur = rng.below(total + 1);
      const std::size_t snk = rng.below(total - cur + 1);
      spec.labels = planted_labels(snk, total - cur - snk, cur, seed + i);
      spec.margin = rng.uniform(0.0, 4.0);
      spec.noise_seed = derive_seed(seed, {kSessionTag, i, 2});
      workload = std::make_unique<PlantedWorkload>(spec, c);
    }

    double worst = 0.0;
    std::size_t reduced = 0;
    std::string modes;
    for (Mode mode : {Mode::hma, Mode::packed}) {
      if (mode == Mode::packed && merged) continue;
      MaskedOracleObserver oracle(c);
      SessionOptions opts;
      opts.observer = &oracle;
      generate_session(*workload, c, mode, opts);
      worst = std::max(worst, oracle.max_abs_error());
      reduced += oracle.reduced_events();
      modes += modes.empty() ? std::string(to_string(mode)) : "+" + std::string(to_string(mode));
    }
    std::ostringstream name;
    name << "masked_oracle session=" << i << " (" << c.num_layers << "x" << c.num_heads
         << " heads, hw=" << c.hw << ", L=" << c.window_len << ", N=" << c.dummy_count << ", "
         << modes << ")";
    out.push_back({name.str(), worst < kEquivalenceTol && reduced > 0,
                   "max |diff| " + fmt(worst) + ", reduced-path events " + std::to_string(reduced)});
  }
  return out;
}

std::vector<CheckResult> verify_cache(std::uint64_t seed) {
  std::vector<CheckResult> out;

  // Accounting identities: window 9, half packed dummies, half 1 sink + 3
  // neighbors (a merged window of 4).
  {
    SessionConfig c;
    c.num_heads = 4;
    c.window_len = 9;
    c.dummy_count = 2;
    c.merged_window = 4;
    std::vector<HeadClass> classes{HeadClass::dummy, HeadClass::sink, HeadClass::dummy,
                                   HeadClass::neighbor};
    const double r = cache_stats(HeadAssignment(classes, 2), c).reduction_ratio;
    out.push_back({"ratio half packed dummy + half 4-frame window", std::abs(r - 0.2778) <= 1e-4,
                   "ratio " + fmt(r)});
    const std::vector<double> budget(4, 1.5);
    const double u = reduction_ratio(budget, 9.0);
    out.push_back({"ratio uniform 1.5-frame budget", std::abs(u - 0.1667) <= 1e-4,
                   "ratio " + fmt(u)});
  }

  const std::vector<CachePolicy> policies{
      {PolicyKind::baseline_window, 4, 0, std::nullopt},
      {PolicyKind::sink_only, 4, 0, std::nullopt},
      {PolicyKind::neighbor_window, 4, 0, std::nullopt},
      {PolicyKind::neighbor_window, 4, 0, std::size_t{6}},
      {PolicyKind::dummy_empty, 4, 0, std::nullopt},
      {PolicyKind::dummy_packed, 4, 0, std::nullopt},
      {PolicyKind::baseline_window, 3, 2, std::nullopt},
      {PolicyKind::neighbor_window, 3, 2, std::nullopt},
  };

  // Empty history: nothing to drop, so every policy retains all of it.
  {
    bool ok = true;
    for (const auto& p : policies) {
      HeadKVCache cache(p);
      const auto ctx = cache.gather_context(tiny_block(0));
      ok = ok && cache.cached_frames() == 0 && ctx.frame_ids == std::vector<std::size_t>{0};
    }
    out.push_back({"empty history full retention", ok,
                   std::to_string(policies.size()) + " policies"});
  }

  // Random append sequences against the set-based retention rules.
  {
    Xoshiro256 rng(derive_seed(seed, {kCacheTag}));
    std::size_t sequences = 0;
    std::string first_failure;
    for (std::size_t trial = 0; trial < 100; ++trial) {
      for (const auto& p : policies) {
        HeadKVCache cache(p);
        std::vector<std::size_t> history;
        std::size_t id = rng.below(3);
        const std::size_t len = rng.below(14);
        for (std::size_t k = 0; k < len; ++k) {
          cache.append_and_evict(tiny_block(id));
          history.push_back(id);
          if (cache.frame_ids() != expected_retention(p, history) && first_failure.empty()) {
            first_failure = std::string(to_string(p.kind)) + " after " + std::to_string(k + 1) +
                            " appends";
          }
          id += 1 + rng.below(2);
        }
        ++sequences;
      }
    }
    out.push_back({"retention matches window rules", first_failure.empty(),
                   first_failure.empty() ? std::to_string(sequences) + " sequences"
                                         : "mismatch: " + first_failure});
  }

  // Out-of-order appends are rejected.
  {
    HeadKVCache cache(policies.front());
    cache.append_and_evict(tiny_block(3));
    bool threw = false;
    try {
      cache.append_and_evict(tiny_block(3));
    } catch (const OrderingError&) {
      threw = true;
    }
    out.push_back({"non-increasing frame id rejected", threw, ""});
  }
  return out;
}

std::vector<CheckResult> verify_scores(std::uint64_t seed, std::size_t maps) {
  std::vector<CheckResult> out;
  Xoshiro256 rng(derive_seed(seed, {kMapTag}));
  double worst = 0.0;
  for (std::size_t i = 0; i < maps; ++i) {
    const std::size_t hw = 1 + rng.below(6);
    const std::size_t window = 2 + rng.below(6);
    std::vector<RegionKind> kinds;
    if (rng.below(4) != 0) kinds.push_back(RegionKind::sink);
    const std::size_t neighbors = rng.below(window);
    kinds.insert(kinds.end(), neighbors, RegionKind::neighbor);
    kinds.push_back(RegionKind::current);
    const auto layout = FrameLayout::from_frames(hw, kinds);
    const std::size_t rows = 1 + rng.below(8);
    Matrix map(rows, layout.total_tokens());
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < map.cols(); ++c) sum += map(r, c) = rng.uniform01() + 1e-12;
      for (std::size_t c = 0; c < map.cols(); ++c) map(r, c) /= sum;
    }
    worst = std::max(worst, std::abs(frame_attention_scores(map, layout).sum() - 1.0));
  }
  out.push_back({"row-stochastic maps sum to 1", worst <= 1e-6,
                 std::to_string(maps) + " maps, max |sum - 1| " + fmt(worst)});

  double uniform_err = 0.0;
  for (std::size_t window = 2; window <= 10; ++window) {
    for (std::size_t hw : {1, 3, 16}) {
      const auto layout = FrameLayout::full_window(hw, window);
      const std::size_t cols = layout.total_tokens();
      Matrix map(4, cols);
      for (auto& v : map.data()) v = 1.0 / static_cast<double>(cols);
      const auto s = frame_attention_scores(map, layout);
      const double l1 = static_cast<double>(window + 1);
      uniform_err = std::max({uniform_err, std::abs(s.sink - 1.0 / l1),
                              std::abs(s.neighbor - (l1 - 2.0) / l1),
                              std::abs(s.current - 1.0 / l1)});
    }
  }
  out.push_back({"uniform map gives (1, L-1, 1)/(L+1)", uniform_err <= 1e-12,
                 "max |diff| " + fmt(uniform_err)});
  return out;
}

std::vector<CheckResult> run_suite(std::string_view suite, std::uint64_t seed) {
  if (suite == "greedy") return verify_greedy(seed);
  if (suite == "equivalence") return verify_equivalence(seed);
  if (suite == "cache") return verify_cache(seed);
  if (suite == "scores") return verify_scores(seed);
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (auto name : {"greedy", "equivalence", "cache", "scores"}) {
      auto part = run_suite(name, seed);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ConfigError("unknown suite '" + std::string(suite) +
                    "' (expected greedy, equivalence, cache, scores or all)");
}

bool print_results(std::ostream& out, const std::vector<CheckResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) out << ": " << r.detail;
    out << '\n';
    ok = ok && r.passed;
  }
  return ok;
}

}  // namespace df::cli
