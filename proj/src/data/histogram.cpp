#include "sfk/data/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sfk/error.hpp"
#include "sfk/keyvalue.hpp"

namespace sfk::data {

int LengthHistogram::row_total(std::size_t cls) const {
  return std::accumulate(counts[cls].begin(), counts[cls].end(), 0) + below[cls] + above[cls];
}

namespace {
std::string edge_label(double v) { return std::isinf(v) ? "inf" : kv::format_real(v); }
}  // namespace

std::string LengthHistogram::to_delimited() const {
  std::ostringstream out;
  const bool any_below = std::any_of(below.begin(), below.end(), [](int v) { return v > 0; });
  const bool any_above = std::any_of(above.begin(), above.end(), [](int v) { return v > 0; });
  out << "class";
  if (any_below) out << "\t<" << edge_label(edges.front());
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) out << "\t[" << edge_label(edges[b]) << "," << edge_label(edges[b + 1]) << ")";
  if (any_above) out << "\t>=" << edge_label(edges.back());
  out << "\ttotal\n";
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out << classes[c];
    if (any_below) out << '\t' << below[c];
    for (int v : counts[c]) out << '\t' << v;
    if (any_above) out << '\t' << above[c];
    out << '\t' << row_total(c) << '\n';
  }
  return out.str();
}

LengthHistogram class_length_histogram(const DatasetManifest& manifest, const std::vector<double>& bin_edges) {
  if (bin_edges.size() < 2) throw ConfigError("histogram needs at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw ConfigError("histogram bin edges must be strictly increasing");
  }
  LengthHistogram h;
  h.classes = manifest.classes;
  h.edges = bin_edges;
  h.counts.assign(manifest.classes.size(), std::vector<int>(bin_edges.size() - 1, 0));
  h.below.assign(manifest.classes.size(), 0);
  h.above.assign(manifest.classes.size(), 0);
  for (const auto& r : manifest.records) {
    const auto c = static_cast<std::size_t>(r.class_index);
    if (r.duration < bin_edges.front()) {
      ++h.below[c];
      continue;
    }
    if (r.duration >= bin_edges.back()) {
      ++h.above[c];
      continue;
    }
    const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), r.duration);
    ++h.counts[c][static_cast<std::size_t>(it - bin_edges.begin() - 1)];
  }
  return h;
}

}  // namespace sfk::data
