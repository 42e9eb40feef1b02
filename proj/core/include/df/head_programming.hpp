#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "df/config.hpp"
#include "df/head_types.hpp"
#include "df/profiler.hpp"

namespace df {

class Workload;

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Retained attention mass of a head under class `cls`: sink keeps
/// sink + current, neighbor keeps neighbor + current, dummy keeps current.
double value(const FrameAttentionScore& score, HeadClass cls) noexcept;

/// Mass forfeited by forcing the head to be dummy: max(sink, neighbor).
double opportunity_cost(const FrameAttentionScore& score) noexcept;

std::vector<double> opportunity_costs(const GlobalFrameScore& scores);

/// Sum of value(row h, classes[h]) in ascending head order.
double objective(const GlobalFrameScore& scores, std::span<const HeadClass> classes);

struct Classification {
  HeadAssignment assignment;
  double objective = 0.0;
};

/// Optimal assignment with exactly `dummy_count` dummy heads: the heads with
/// the smallest opportunity cost become dummy (ties to the lower index);
/// every other head is sink if its sink score >= its neighbor score, else
/// neighbor. O(n log n).
Classification greedy_classify(const GlobalFrameScore& scores, std::size_t dummy_count);

inline constexpr std::size_t kBruteForceMaxHeads = 16;

/// Exhaustive search over all 3^n assignments with exactly `dummy_count`
/// dummies. Returns the first maximizer in enumeration order. Throws
/// CapacityError above kBruteForceMaxHeads heads.
Classification brute_force_classify(const GlobalFrameScore& scores, std::size_t dummy_count);

/// Profiles `workload` once at config.probe (baseline path, subsampled
/// queries) and classifies with config.dummy_count dummies.
Classification classify_session(const Workload& workload, const SessionConfig& config);

}  // namespace df
