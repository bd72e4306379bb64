#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sfk::data {

enum class Split { kTrain, kVal, kTest, kUnassigned };

std::string to_string(Split split);
/// Accepts "train", "val", "test"; an empty string maps to kUnassigned.
Split parse_split(const std::string& text);

struct VideoRecord {
  std::string id;
  /// Path as written in the manifest; relative paths resolve against the manifest directory.
  std::string path;
  std::string class_label;
  int class_index = -1;
  std::string player_id;
  double duration = 0.0;
  int frame_count = 0;
  Split split = Split::kUnassigned;
};

/// The 12 shot classes of the THETIS RGB dataset, in catalogue order.
const std::vector<std::string>& thetis_classes();

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<VideoRecord> records;
  std::string source_note;
  std::filesystem::path base_dir;

  std::optional<int> class_index(const std::string& name) const;
  std::filesystem::path resolve(const VideoRecord& record) const;
  std::vector<const VideoRecord*> records_in(Split split) const;
  const VideoRecord* find(const std::string& id) const;
  /// Records per class, in class order.
  std::vector<int> class_counts() const;
};

inline constexpr int kManifestVersion = 1;

struct ManifestOptions {
  /// Listings may leave frames/duration blank; they are probed later.
  bool allow_unprobed = false;
};

/// Format (comma separated, no quoting):
///
///   # sfk-manifest: 1
///   # classes: backhand,backhand 2 hands,...
///   # source: free text
///   id,path,class,player,frames,duration,split
///   p1_bh_01,videos/p1_bh_01.avi,backhand,p1,90,3.0,
///
/// The `split` column is optional and may be blank. Without a `classes`
/// directive the class list is the order of first appearance.
DatasetManifest parse_manifest(const std::string& text, const std::string& origin = "<manifest>",
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace sfk::data
