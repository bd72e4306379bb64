#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"

namespace sfk::data {

using SplitRatios = std::array<double, 3>;  // train, val, test

struct SplitOptions {
  /// Keep all videos of one player inside a single split.
  bool group_by_player = false;
};

struct SplitSpec {
  SplitRatios ratios{0.7, 0.2, 0.1};
  std::uint64_t seed = 0;
  bool group_by_player = false;
  std::map<std::string, Split> assignment;
  /// Non-fatal findings, e.g. a split left empty for some class.
  std::vector<std::string> warnings;

  Split of(const std::string& record_id) const;
};

/// Splits n items by the ratios: floor allocation, then one extra item per
/// largest fractional remainder. Equal remainders go to the earlier split
/// (train before val before test).
std::array<int, 3> allocate_counts(int n, const SplitRatios& ratios);

/// Stratified per class (or per player group); pure function of its inputs.
/// Records that already carry a split in the manifest keep it.
SplitSpec make_splits(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed,
                      const SplitOptions& options = {});

/// Writes the assignment into the manifest records.
void apply_splits(DatasetManifest& manifest, const SplitSpec& spec);

}  // namespace sfk::data
