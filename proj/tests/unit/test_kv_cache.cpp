#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "df/kv_cache.hpp"
#include "oracles.hpp"

using namespace df;

namespace {

FrameBlock block(std::size_t id, std::size_t hw = 2, std::size_t d = 3) {
  Matrix k(hw, d), v(hw, d);
  for (std::size_t r = 0; r < hw; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      k(r, c) = static_cast<double>(id) + 0.1 * static_cast<double>(r) + 0.01 * static_cast<double>(c);
      v(r, c) = -k(r, c);
    }
  return FrameBlock{id, k, v};
}

HeadKVCache filled(CachePolicy p, std::initializer_list<std::size_t> ids) {
  HeadKVCache c(p);
  for (auto id : ids) c.append_and_evict(block(id));
  return c;
}

SessionConfig config_with(std::size_t window) {
  SessionConfig c;
  c.window_len = window;
  return c;
}

}  // namespace

TEST_CASE("derive_policy examples") {
  SessionConfig c = config_with(9);
  const auto sink = derive_policy(HeadClass::sink, c);
  CHECK(sink.kind == PolicyKind::sink_only);
  CHECK(sink.sink_frame == 0);
  CHECK(sink.past_capacity() == 1);

  const auto packed = derive_policy(HeadClass::dummy, c);
  CHECK(packed.kind == PolicyKind::dummy_packed);
  CHECK(packed.past_capacity() == 1);

  c.packing_enabled = false;
  CHECK(derive_policy(HeadClass::dummy, c).kind == PolicyKind::dummy_empty);
  CHECK(derive_policy(HeadClass::dummy, c).past_capacity() == 0);

  const auto neighbor = derive_policy(HeadClass::neighbor, config_with(4), std::size_t{6});
  CHECK(neighbor.kind == PolicyKind::neighbor_window);
  CHECK(neighbor.extended_window == std::size_t{6});
  CHECK(neighbor.past_capacity() == 6);
  CHECK(derive_policy(HeadClass::neighbor, config_with(4)).past_capacity() == 3);

  CHECK(baseline_policy(config_with(4)).past_capacity() == 4);
}

TEST_CASE("extended neighbor window redistributes the baseline budget") {
  // 5 heads, L = 3: budget 15 past frames; 1 sink keeps 1, 2 packed dummies
  // keep 1 each, so 2 neighbor heads share 12 -> 6 each.
  SessionConfig c = config_with(3);
  c.context_extension = true;
  ClassCounts counts{1, 2, 2};
  CHECK(extended_neighbor_window(counts, c) == std::size_t{6});

  c.packing_enabled = false;  // dummies keep nothing: (15 - 1) / 2 = 7
  CHECK(extended_neighbor_window(counts, c) == std::size_t{7});

  CHECK_FALSE(extended_neighbor_window(ClassCounts{2, 0, 3}, c).has_value());
  // Never below the plain window even when nothing is released.
  CHECK(extended_neighbor_window(ClassCounts{0, 4, 0}, c) == std::size_t{3});

  const HeadAssignment a({HeadClass::sink, HeadClass::neighbor, HeadClass::dummy, HeadClass::neighbor,
                          HeadClass::dummy},
                         2);
  c.packing_enabled = true;
  for (const auto& p : derive_policies(a, c)) {
    if (p.kind == PolicyKind::neighbor_window) CHECK(p.past_capacity() == 6);
  }
}

TEST_CASE("append_and_evict examples") {
  const HeadKVCache empty = filled({PolicyKind::dummy_empty, 3, 0, {}}, {0, 1, 2, 7});
  CHECK(empty.cached_frames() == 0);

  HeadKVCache nb({PolicyKind::neighbor_window, 3, 0, {}});
  nb.append_and_evict(block(4));
  nb.append_and_evict(block(5));
  CHECK(nb.frame_ids() == std::vector<std::size_t>{4, 5});
  nb.append_and_evict(block(6));
  CHECK(nb.frame_ids() == std::vector<std::size_t>{5, 6});

  HeadKVCache base = filled({PolicyKind::baseline_window, 4, 0, {}}, {0, 5, 6, 7});
  CHECK(base.frame_ids() == std::vector<std::size_t>{0, 5, 6, 7});
  base.append_and_evict(block(8));
  CHECK(base.frame_ids() == std::vector<std::size_t>{0, 6, 7, 8});
}

TEST_CASE("frame ids must strictly increase") {
  HeadKVCache c({PolicyKind::dummy_empty, 3, 0, {}});
  c.append_and_evict(block(2));
  CHECK_THROWS_AS(c.append_and_evict(block(2)), OrderingError);
  CHECK_THROWS_AS(c.append_and_evict(block(1)), OrderingError);
  c.append_and_evict(block(3));
}

TEST_CASE("gather_context examples") {
  const std::size_t hw = 2;
  SUBCASE("sink only") {
    const auto c = filled({PolicyKind::sink_only, 9, 0, {}}, {0, 1, 2});
    const auto ctx = c.gather_context(block(3));
    CHECK(ctx.keys.rows() == 2 * hw);
    CHECK(ctx.frame_ids == std::vector<std::size_t>{0, 3});
    CHECK(ctx.layout == FrameLayout(hw, {{RegionKind::sink, {0, 2}}, {RegionKind::current, {2, 4}}}));
  }
  SUBCASE("dummy empty") {
    const auto c = filled({PolicyKind::dummy_empty, 9, 0, {}}, {0, 1});
    const auto cur = block(2);
    const auto ctx = c.gather_context(cur);
    CHECK(ctx.keys == cur.keys);
    CHECK(ctx.values == cur.values);
  }
  SUBCASE("warm baseline window") {
    const auto c = filled({PolicyKind::baseline_window, 4, 0, {}}, {0, 1, 2, 3, 4, 5, 6});
    const auto ctx = c.gather_context(block(7));
    CHECK(ctx.keys.rows() == 5 * hw);
    CHECK(ctx.frame_ids == std::vector<std::size_t>{0, 4, 5, 6, 7});
    for (std::size_t f = 0; f < 5; ++f) CHECK(ctx.keys(f * hw, 0) == static_cast<double>(ctx.frame_ids[f]));
    CHECK(ctx.layout == FrameLayout::full_window(hw, 4));
  }
}

TEST_CASE("retention never exceeds capacity and the sink id is fixed") {
  oracle::Lcg rng(21);
  const PolicyKind kinds[] = {PolicyKind::baseline_window, PolicyKind::sink_only, PolicyKind::neighbor_window,
                              PolicyKind::dummy_empty, PolicyKind::dummy_packed};
  for (int trial = 0; trial < 300; ++trial) {
    CachePolicy p{kinds[rng.below(5)], 2 + rng.below(6), rng.below(3), {}};
    if (p.kind == PolicyKind::neighbor_window && rng.below(2)) p.extended_window = p.window_len + rng.below(4);
    HeadKVCache c(p);
    std::size_t id = 0;
    bool sink_seen = false;
    for (std::size_t n = rng.below(20); n > 0; --n) {
      c.append_and_evict(block(id));
      sink_seen = sink_seen || id == p.sink_frame;
      CHECK(c.cached_frames() <= p.past_capacity());
      const auto ids = c.frame_ids();
      CHECK(std::is_sorted(ids.begin(), ids.end()));
      const bool has_sink = std::find(ids.begin(), ids.end(), p.sink_frame) != ids.end();
      if ((p.kind == PolicyKind::baseline_window || p.kind == PolicyKind::sink_only) && sink_seen) {
        CHECK(has_sink);
      }
      if (p.kind == PolicyKind::neighbor_window) CHECK_FALSE(has_sink);
      id += 1 + rng.below(2);
    }
  }
}

TEST_CASE("gathered attention equals full-history attention with uncached keys masked") {
  oracle::Lcg rng(4);
  const std::size_t hw = 3, d = 4;
  for (int trial = 0; trial < 100; ++trial) {
    const PolicyKind kind = static_cast<PolicyKind>(rng.below(5));
    HeadKVCache c({kind, 2 + rng.below(4), 0, {}});
    std::vector<FrameBlock> history;
    const std::size_t frames = rng.below(9);
    for (std::size_t f = 0; f < frames; ++f) {
      FrameBlock b{f, oracle::random_matrix(rng, hw, d), oracle::random_matrix(rng, hw, d)};
      history.push_back(b);
      c.append_and_evict(b);
    }
    const FrameBlock cur{frames, oracle::random_matrix(rng, hw, d), oracle::random_matrix(rng, hw, d)};
    const Matrix q = oracle::random_matrix(rng, hw, d, 2.0);

    const auto ctx = c.gather_context(cur);
    const Matrix pruned = attention(q, ctx.keys, ctx.values).output;

    oracle::Rows k, v;
    std::vector<bool> keep;
    const auto ids = c.frame_ids();
    for (const auto& b : history) {
      const bool kept = std::find(ids.begin(), ids.end(), b.frame_id) != ids.end();
      for (auto& r : oracle::rows_of(b.keys)) k.push_back(r);
      for (auto& r : oracle::rows_of(b.values)) v.push_back(r);
      keep.insert(keep.end(), hw, kept);
    }
    for (auto& r : oracle::rows_of(cur.keys)) k.push_back(r);
    for (auto& r : oracle::rows_of(cur.values)) v.push_back(r);
    keep.insert(keep.end(), hw, true);
    const auto ref = oracle::naive_attention(oracle::rows_of(q), k, v, 1.0 / std::sqrt(double(d)), &keep);
    CHECK(oracle::max_diff(ref, pruned) < 1e-6);
  }
}

TEST_CASE("rebuilt_with keeps what the new policy retains") {
  const auto base = filled({PolicyKind::baseline_window, 4, 0, {}}, {0, 1, 2, 3, 4});
  CHECK(base.rebuilt_with({PolicyKind::sink_only, 4, 0, {}}).frame_ids() == std::vector<std::size_t>{0});
  CHECK(base.rebuilt_with({PolicyKind::neighbor_window, 4, 0, {}}).frame_ids() ==
        std::vector<std::size_t>{2, 3, 4});
  auto packed = base.rebuilt_with({PolicyKind::dummy_packed, 4, 0, {}});
  CHECK(packed.frame_ids() == std::vector<std::size_t>{4});
  CHECK_THROWS_AS(packed.append_and_evict(block(4)), OrderingError);
}

TEST_CASE("cache accounting identities") {
  SUBCASE("half packed dummies, half merged 4-frame windows over a 9-frame baseline") {
    SessionConfig c = config_with(9);
    c.num_layers = 30;
    c.num_heads = 12;
    c.merged_window = 4;
    std::vector<HeadClass> classes(360, HeadClass::sink);
    for (std::size_t h = 0; h < 360; h += 2) classes[h] = HeadClass::dummy;
    c.dummy_count = 180;
    const auto stats = cache_stats(HeadAssignment(classes, 180), c);
    CHECK(stats.baseline_past_frames == 9.0);
    CHECK(std::abs(stats.reduction_ratio - (0.5 * 1 + 0.5 * 4) / 9.0) < 1e-12);
    CHECK(std::abs(stats.reduction_ratio - 0.2778) <= 1e-4);
  }
  SUBCASE("uniform 1.5-frame budget") {
    const std::vector<double> frames(360, 1.5);
    CHECK(std::abs(reduction_ratio(frames, 9.0) - 0.1667) <= 1e-4);
  }
  SUBCASE("all baseline") {
    SessionConfig c = config_with(5);
    c.num_heads = 6;
    const std::vector<CachePolicy> policies(6, baseline_policy(c));
    CHECK(cache_stats(policies, c).reduction_ratio == 1.0);
  }
}

TEST_CASE("cache ratio is invariant under head permutation") {
  oracle::Lcg rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    SessionConfig c = config_with(2 + rng.below(8));
    c.num_heads = 1 + rng.below(12);
    c.context_extension = rng.below(2) == 1;
    std::vector<HeadClass> classes;
    std::size_t dummies = 0;
    for (std::size_t h = 0; h < c.num_heads; ++h) {
      classes.push_back(static_cast<HeadClass>(rng.below(3)));
      dummies += classes.back() == HeadClass::dummy;
    }
    const double before = cache_stats(HeadAssignment(classes, dummies), c).reduction_ratio;
    std::reverse(classes.begin(), classes.end());
    std::rotate(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(rng.below(classes.size())),
                classes.end());
    const double after = cache_stats(HeadAssignment(classes, dummies), c).reduction_ratio;
    CHECK(std::abs(before - after) < 1e-12);
    CHECK(after > 0.0);
  }
}

TEST_CASE("invalid policies are rejected") {
  CHECK_THROWS_AS(HeadKVCache({PolicyKind::baseline_window, 1, 0, {}}), ConfigError);
  CHECK_THROWS_AS(HeadKVCache({PolicyKind::neighbor_window, 4, 0, std::size_t{2}}), ConfigError);
}
