#include "sfk/data/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sfk/error.hpp"
#include "sfk/rng.hpp"

namespace sfk::data {

namespace {

constexpr double kEps = 1e-9;

void check_ratios(const SplitRatios& ratios) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");
}

constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kVal, Split::kTest};

}  // namespace

Split SplitSpec::of(const std::string& record_id) const {
  auto it = assignment.find(record_id);
  return it == assignment.end() ? Split::kUnassigned : it->second;
}

std::array<int, 3> allocate_counts(int n, const SplitRatios& ratios) {
  check_ratios(ratios);
  std::array<int, 3> counts{};
  std::array<double, 3> remainder{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * n;
    // Tolerance absorbs representation error such as 0.7 * 165 = 115.49999...
    counts[i] = static_cast<int>(std::floor(exact + kEps));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  int left = n - assigned;
  while (left > 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best] + kEps) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    --left;
  }
  return counts;
}

SplitSpec make_splits(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed,
                      const SplitOptions& options) {
  check_ratios(ratios);
  SplitSpec spec;
  spec.ratios = ratios;
  spec.seed = seed;
  spec.group_by_player = options.group_by_player;

  std::vector<const VideoRecord*> free_records;
  for (const auto& r : manifest.records) {
    if (r.split != Split::kUnassigned) {
      spec.assignment[r.id] = r.split;
    } else {
      free_records.push_back(&r);
    }
  }
  // Input order must not matter.
  std::sort(free_records.begin(), free_records.end(),
            [](const VideoRecord* a, const VideoRecord* b) { return a->id < b->id; });

  if (!options.group_by_player) {
    for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
      std::vector<const VideoRecord*> members;
      for (const auto* r : free_records) {
        if (r->class_index == static_cast<int>(c)) members.push_back(r);
      }
      if (members.empty()) continue;
      Rng rng(mix_seed(seed, c));
      rng.shuffle(members.begin(), members.end());
      const auto counts = allocate_counts(static_cast<int>(members.size()), ratios);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        for (int k = 0; k < counts[s]; ++k) spec.assignment[members[pos++]->id] = kSplits[s];
      }
    }
  } else {
    std::map<std::string, std::vector<const VideoRecord*>> by_player;
    for (const auto* r : free_records) by_player[r->player_id].push_back(r);
    std::vector<std::string> players;
    for (const auto& [p, _] : by_player) players.push_back(p);
    Rng rng(mix_seed(seed, 0x9127));
    rng.shuffle(players.begin(), players.end());
    const auto target = allocate_counts(static_cast<int>(free_records.size()), ratios);
    std::array<int, 3> filled{};
    for (const auto& p : players) {
      // Largest remaining deficit takes the whole player; earlier split on ties.
      std::size_t best = 0;
      for (std::size_t s = 1; s < 3; ++s) {
        if (target[s] - filled[s] > target[best] - filled[best]) best = s;
      }
      for (const auto* r : by_player[p]) spec.assignment[r->id] = kSplits[best];
      filled[best] += static_cast<int>(by_player[p].size());
    }
  }

  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    std::array<int, 3> per{};
    bool any = false;
    for (const auto& r : manifest.records) {
      if (r.class_index != static_cast<int>(c)) continue;
      any = true;
      const Split s = spec.of(r.id);
      for (std::size_t i = 0; i < 3; ++i) {
        if (kSplits[i] == s) ++per[i];
      }
    }
    if (!any) continue;
    for (std::size_t i = 0; i < 3; ++i) {
      if (ratios[i] > 0 && per[i] == 0) {
        spec.warnings.push_back("class '" + manifest.classes[c] + "' has no " + to_string(kSplits[i]) + " records");
      }
    }
  }
  return spec;
}

void apply_splits(DatasetManifest& manifest, const SplitSpec& spec) {
  for (auto& r : manifest.records) r.split = spec.of(r.id);
}

}  // namespace sfk::data
