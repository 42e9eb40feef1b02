#include "df/head_types.hpp"

#include <algorithm>
#include <string>

namespace df {

std::string_view to_string(HeadClass c) noexcept {
  switch (c) {
    case HeadClass::sink: return "sink";
    case HeadClass::neighbor: return "neighbor";
    case HeadClass::dummy: return "dummy";
  }
  return "?";
}

std::optional<HeadClass> head_class_from_string(std::string_view s) noexcept {
  if (s == "sink") return HeadClass::sink;
  if (s == "neighbor") return HeadClass::neighbor;
  if (s == "dummy") return HeadClass::dummy;
  return std::nullopt;
}

HeadAssignment::HeadAssignment(std::vector<HeadClass> classes, std::size_t dummy_count)
    : classes_(std::move(classes)), dummy_count_(dummy_count) {
  const auto dummies = static_cast<std::size_t>(
      std::count(classes_.begin(), classes_.end(), HeadClass::dummy));
  if (dummies != dummy_count_) {
    throw AssignmentError("assignment has " + std::to_string(dummies) +
                          " dummy heads, expected " + std::to_string(dummy_count_));
  }
}

HeadAssignment HeadAssignment::uniform(std::size_t total_heads, HeadClass fill) {
  return HeadAssignment(std::vector<HeadClass>(total_heads, fill),
                        fill == HeadClass::dummy ? total_heads : 0);
}

std::span<const HeadClass> HeadAssignment::layer(std::size_t layer, std::size_t num_heads) const {
  if ((layer + 1) * num_heads > classes_.size()) {
    throw AssignmentError("assignment has no classes for layer " + std::to_string(layer));
  }
  return std::span<const HeadClass>(classes_).subspan(layer * num_heads, num_heads);
}

ClassCounts HeadAssignment::counts() const noexcept {
  ClassCounts c;
  for (HeadClass h : classes_) {
    switch (h) {
      case HeadClass::sink: ++c.sink; break;
      case HeadClass::neighbor: ++c.neighbor; break;
      case HeadClass::dummy: ++c.dummy; break;
    }
  }
  return c;
}

std::vector<ClassCounts> HeadAssignment::per_layer_counts(std::size_t num_heads) const {
  std::vector<ClassCounts> out;
  if (num_heads == 0) return out;
  for (std::size_t l = 0; l * num_heads < classes_.size(); ++l) {
    ClassCounts c;
    for (HeadClass h : layer(l, num_heads)) {
      c.sink += h == HeadClass::sink;
      c.neighbor += h == HeadClass::neighbor;
      c.dummy += h == HeadClass::dummy;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace df
