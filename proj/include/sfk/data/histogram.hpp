#pragma once

#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"

namespace sfk::data {

/// Per-class counts of video durations over bins [edge_i, edge_{i+1}).
/// Durations outside every bin land in `below` / `above`, so each row still
/// sums to the class's record count.
struct LengthHistogram {
  std::vector<std::string> classes;
  std::vector<double> edges;
  std::vector<std::vector<int>> counts;
  std::vector<int> below;
  std::vector<int> above;

  int row_total(std::size_t cls) const;
  /// Tab-separated table, one row per class, one column per bin.
  std::string to_delimited() const;
};

LengthHistogram class_length_histogram(const DatasetManifest& manifest, const std::vector<double>& bin_edges);

}  // namespace sfk::data
