#pragma once

// Planted recovery setup shared by the unit tests and the acceptance gate.

#include <cstdint>
#include <vector>

#include "df/head_programming.hpp"
#include "df/profiler.hpp"
#include "df/scenario.hpp"

namespace fixture {

/// Smallest margin (in steps of 0.01) at which classify_session recovered
/// every planted label for seeds 0..19 of recovery_shape().
inline constexpr double kRecoveryMargin = 0.12;
inline constexpr std::uint64_t kRecoverySeeds = 20;

inline df::SessionConfig recovery_shape() {
  df::SessionConfig c;
  c.num_layers = 2;
  c.num_heads = 4;
  c.head_dim = 8;
  c.hw = 16;
  c.window_len = 3;
  c.ar_steps = 6;
  c.dummy_count = 3;
  return c;
}

inline df::PlantedSpec recovery_spec(double margin, std::uint64_t seed) {
  df::PlantedSpec spec;
  spec.labels = df::planted_labels(3, 2, 3, seed);
  spec.margin = margin;
  spec.noise_seed = seed;
  return spec;
}

inline df::HeadClass class_of(df::PlantedLabel l) {
  switch (l) {
    case df::PlantedLabel::sink: return df::HeadClass::sink;
    case df::PlantedLabel::neighbor: return df::HeadClass::neighbor;
    case df::PlantedLabel::current: break;
  }
  return df::HeadClass::dummy;
}

/// True when classification recovers the planted labels exactly.
inline bool recovers(double margin, std::uint64_t seed) {
  const auto config = recovery_shape();
  const auto spec = recovery_spec(margin, seed);
  const auto got = df::classify_session(df::planted_stream(spec, config), config).assignment;
  for (std::size_t h = 0; h < spec.labels.size(); ++h) {
    if (got[h] != class_of(spec.labels[h])) return false;
  }
  return true;
}

inline std::uint64_t recovered_seeds(double margin) {
  std::uint64_t n = 0;
  for (std::uint64_t s = 0; s < kRecoverySeeds; ++s) n += recovers(margin, s) ? 1 : 0;
  return n;
}

/// Core-set ratio of the top-N current-frame heads over `conditions`
/// prompt-seed perturbations of one planted stream.
inline double stability_ratio(double margin, double strength, std::size_t conditions, std::uint64_t seed) {
  const auto config = recovery_shape();
  const auto base = recovery_spec(margin, seed);
  std::vector<df::HeadIndexSet> sets;
  for (std::size_t c = 0; c < conditions; ++c) {
    const auto spec = df::stability_perturb(base, df::ConditionKind::prompt_seed, c, strength);
    const auto scores = df::global_scores(df::planted_stream(spec, config), config, config.probe,
                                          config.subsample_ratio);
    sets.push_back(df::top_n_current(scores, config.dummy_count));
  }
  return df::core_set_ratio(sets);
}

}  // namespace fixture
