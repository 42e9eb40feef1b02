#include "df/head_programming.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "df/session.hpp"

namespace df {

double value(const FrameAttentionScore& score, HeadClass cls) noexcept {
  switch (cls) {
    case HeadClass::sink: return score.sink + score.current;
    case HeadClass::neighbor: return score.neighbor + score.current;
    case HeadClass::dummy: return score.current;
  }
  return 0.0;
}

double opportunity_cost(const FrameAttentionScore& score) noexcept {
  return std::max(score.sink, score.neighbor);
}

std::vector<double> opportunity_costs(const GlobalFrameScore& scores) {
  std::vector<double> out(scores.total_heads());
  for (std::size_t h = 0; h < out.size(); ++h) out[h] = opportunity_cost(scores.row(h));
  return out;
}

double objective(const GlobalFrameScore& scores, std::span<const HeadClass> classes) {
  if (classes.size() != scores.total_heads()) {
    throw AssignmentError("objective: " + std::to_string(classes.size()) + " classes for " +
                          std::to_string(scores.total_heads()) + " heads");
  }
  double total = 0.0;
  for (std::size_t h = 0; h < classes.size(); ++h) total += value(scores.row(h), classes[h]);
  return total;
}

Classification greedy_classify(const GlobalFrameScore& scores, std::size_t dummy_count) {
  const std::size_t n = scores.total_heads();
  if (dummy_count > n) {
    throw ConfigError("greedy_classify: N=" + std::to_string(dummy_count) + " exceeds " +
                      std::to_string(n) + " heads");
  }
  const auto cost = opportunity_costs(scores);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });

  std::vector<HeadClass> classes(n);
  for (std::size_t h = 0; h < n; ++h) {
    const auto s = scores.row(h);
    classes[h] = s.sink >= s.neighbor ? HeadClass::sink : HeadClass::neighbor;
  }
  for (std::size_t i = 0; i < dummy_count; ++i) classes[order[i]] = HeadClass::dummy;

  Classification out;
  out.objective = objective(scores, classes);
  out.assignment = HeadAssignment(std::move(classes), dummy_count);
  return out;
}

Classification brute_force_classify(const GlobalFrameScore& scores, std::size_t dummy_count) {
  const std::size_t n = scores.total_heads();
  if (n > kBruteForceMaxHeads) {
    throw CapacityError("brute_force_classify: " + std::to_string(n) + " heads exceeds limit " +
                        std::to_string(kBruteForceMaxHeads));
  }
  if (dummy_count > n) {
    throw ConfigError("brute_force_classify: N=" + std::to_string(dummy_count) + " exceeds " +
                      std::to_string(n) + " heads");
  }
  constexpr HeadClass kOrder[3] = {HeadClass::sink, HeadClass::neighbor, HeadClass::dummy};

  // Base-3 odometer over every assignment; head 0 is the fastest digit.
  std::vector<int> digits(n, 0);
  std::vector<HeadClass> classes(n, HeadClass::sink);
  std::vector<HeadClass> best;
  double best_value = 0.0;
  std::size_t dummies = 0;
  while (true) {
    if (dummies == dummy_count) {
      const double v = objective(scores, classes);
      if (best.empty() || v > best_value) {
        best = classes;
        best_value = v;
      }
    }
    std::size_t pos = 0;
    while (pos < n && digits[pos] == 2) {
      digits[pos] = 0;
      classes[pos] = kOrder[0];
      --dummies;
      ++pos;
    }
    if (pos == n) break;
    ++digits[pos];
    classes[pos] = kOrder[digits[pos]];
    if (digits[pos] == 2) ++dummies;
  }
  return {HeadAssignment(std::move(best), dummy_count), best_value};
}

Classification classify_session(const Workload& workload, const SessionConfig& config) {
  config.validate();
  const auto scores = global_scores(workload, config, config.probe, config.subsample_ratio);
  return greedy_classify(scores, config.dummy_count);
}

}  // namespace df
