#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace df {

enum class HeadClass { sink, neighbor, dummy };

std::string_view to_string(HeadClass c) noexcept;
std::optional<HeadClass> head_class_from_string(std::string_view s) noexcept;

class AssignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ClassCounts {
  std::size_t sink = 0;
  std::size_t neighbor = 0;
  std::size_t dummy = 0;
  std::size_t total() const noexcept { return sink + neighbor + dummy; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// Per-head class over the flat head index (layer * num_heads + head), with
/// exactly `dummy_count()` dummy heads.
class HeadAssignment {
 public:
  HeadAssignment() = default;
  /// Throws AssignmentError unless exactly `dummy_count` classes are dummy.
  HeadAssignment(std::vector<HeadClass> classes, std::size_t dummy_count);

  /// Every head gets `fill`; dummy_count follows from it.
  static HeadAssignment uniform(std::size_t total_heads, HeadClass fill);

  std::size_t size() const noexcept { return classes_.size(); }
  std::size_t dummy_count() const noexcept { return dummy_count_; }
  HeadClass operator[](std::size_t flat) const { return classes_.at(flat); }
  std::span<const HeadClass> classes() const noexcept { return classes_; }

  /// Classes of one layer's heads.
  std::span<const HeadClass> layer(std::size_t layer, std::size_t num_heads) const;

  ClassCounts counts() const noexcept;
  std::vector<ClassCounts> per_layer_counts(std::size_t num_heads) const;

  friend bool operator==(const HeadAssignment&, const HeadAssignment&) = default;

 private:
  std::vector<HeadClass> classes_;
  std::size_t dummy_count_ = 0;
};

}  // namespace df
