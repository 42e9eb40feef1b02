#include <benchmark/benchmark.h>

#include <vector>

#include "df/attention_engine.hpp"
#include "df/head_programming.hpp"
#include "df/rng.hpp"

namespace {

df::Matrix random_matrix(df::Xoshiro256& rng, std::size_t rows, std::size_t cols) {
  df::Matrix m(rows, cols);
  for (auto& x : m.data()) x = rng.uniform(-1.0, 1.0);
  return m;
}

// One warm layer of 8 heads split 2 sink / 2 neighbor / 4 dummy.
struct WarmLayer {
  df::SessionConfig config;
  df::HeadAssignment assignment;
  std::vector<df::Matrix> queries;
  std::vector<df::FrameBlock> current;
  std::vector<df::HeadKVCache> reduced;
  std::vector<df::HeadKVCache> baseline;

  WarmLayer(std::size_t context_frames, std::size_t hw) {
    using enum df::HeadClass;
    config.num_heads = 8;
    config.head_dim = 32;
    config.hw = hw;
    config.window_len = context_frames - 1;
    config.dummy_count = 4;
    assignment = df::HeadAssignment({sink, dummy, neighbor, dummy, dummy, sink, neighbor, dummy}, 4);
    const auto policies = df::derive_policies(assignment, config);
    df::Xoshiro256 rng(42);
    for (std::size_t h = 0; h < config.num_heads; ++h) {
      queries.push_back(random_matrix(rng, hw, config.head_dim));
      reduced.emplace_back(policies[h]);
      baseline.emplace_back(df::baseline_policy(config));
      for (std::size_t f = 0; f < context_frames; ++f) {
        df::FrameBlock b{f, random_matrix(rng, hw, config.head_dim), random_matrix(rng, hw, config.head_dim)};
        reduced.back().append_and_evict(b);
        baseline.back().append_and_evict(std::move(b));
      }
      current.push_back({context_frames, random_matrix(rng, hw, config.head_dim),
                         random_matrix(rng, hw, config.head_dim)});
    }
  }
};

void layer_step(benchmark::State& state, df::Mode mode) {
  const WarmLayer layer(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto& caches = mode == df::Mode::baseline ? layer.baseline : layer.reduced;
  const df::LayerInputs in{layer.queries, caches, layer.current};
  std::uint64_t macs = 0;
  for (auto _ : state) {
    auto r = df::layer_step(mode, in, layer.assignment.classes(), layer.config);
    macs = r.key_token_macs;
    benchmark::DoNotOptimize(r.outputs.data());
  }
  state.counters["key_token_macs"] = static_cast<double>(macs);
}

void BM_Baseline(benchmark::State& s) { layer_step(s, df::Mode::baseline); }
void BM_Hma(benchmark::State& s) { layer_step(s, df::Mode::hma); }
void BM_Packed(benchmark::State& s) { layer_step(s, df::Mode::packed); }

void layer_args(benchmark::internal::Benchmark* b) {
  for (long frames : {5, 9, 15}) b->Args({frames, 64});
  b->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_Baseline)->Apply(layer_args);
BENCHMARK(BM_Hma)->Apply(layer_args);
BENCHMARK(BM_Packed)->Apply(layer_args);

void BM_GreedyClassify(benchmark::State& state) {
  const auto heads = static_cast<std::size_t>(state.range(0));
  df::Xoshiro256 rng(7);
  df::Matrix f(heads, 3);
  for (auto& x : f.data()) x = rng.uniform(0.0, 1.0);
  const df::GlobalFrameScore scores(f, heads);
  for (auto _ : state) benchmark::DoNotOptimize(df::greedy_classify(scores, heads / 2));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GreedyClassify)->RangeMultiplier(4)->Range(16, 16384)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();
