#include "sfk/data/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sfk/error.hpp"
#include "sfk/keyvalue.hpp"

namespace sfk::data {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "";
}

Split parse_split(const std::string& text) {
  const auto t = kv::trim(text);
  if (t.empty() || t == "unassigned") return Split::kUnassigned;
  if (t == "train") return Split::kTrain;
  if (t == "val" || t == "validation") return Split::kVal;
  if (t == "test") return Split::kTest;
  throw DataError("unknown split '" + text + "' (expected train, val, test or blank)");
}

const std::vector<std::string>& thetis_classes() {
  static const std::vector<std::string> classes{
      "backhand",         "backhand 2 hands", "backhand slice", "backhand volley", "flat service", "forehand flat",
      "forehand open-stands", "forehand slice", "forehand volley", "kick service", "slice service", "smash"};
  return classes;
}

std::optional<int> DatasetManifest::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::filesystem::path DatasetManifest::resolve(const VideoRecord& record) const {
  std::filesystem::path p(record.path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::vector<const VideoRecord*> DatasetManifest::records_in(Split split) const {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

const VideoRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<int> DatasetManifest::class_counts() const {
  std::vector<int> counts(classes.size(), 0);
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.class_index)];
  return counts;
}

namespace {

const std::vector<std::string> kColumns{"id", "path", "class", "player", "frames", "duration", "split"};

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const std::string& origin, const ManifestOptions& options) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  bool have_split_column = false;
  bool classes_declared = false;
  std::set<std::string> ids;
  auto where = [&](int n) { return origin + ":" + std::to_string(n) + ": "; };

  while (std::getline(in, line)) {
    ++line_no;
    const auto t = kv::trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto body = kv::trim(t.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      const auto key = kv::trim(body.substr(0, colon));
      const auto value = kv::trim(body.substr(colon + 1));
      if (key == "sfk-manifest") {
        if (kv::parse_int("sfk-manifest", value) != kManifestVersion) {
          throw DataError(where(line_no) + "unsupported manifest version " + value);
        }
      } else if (key == "classes") {
        if (have_header) throw DataError(where(line_no) + "classes directive must precede the header row");
        std::set<std::string> seen;
        for (const auto& c : kv::split(value, ',')) {
          const auto name = kv::trim(c);
          if (name.empty()) throw DataError(where(line_no) + "empty class name");
          if (!seen.insert(name).second) throw DataError(where(line_no) + "duplicate class name '" + name + "'");
          m.classes.push_back(name);
        }
        classes_declared = true;
      } else if (key == "source") {
        m.source_note = value;
      }
      continue;
    }
    auto fields = kv::split(t, ',');
    for (auto& f : fields) f = kv::trim(f);
    if (!have_header) {
      const bool six = fields.size() == 6 && std::equal(fields.begin(), fields.end(), kColumns.begin());
      const bool seven = fields.size() == 7 && std::equal(fields.begin(), fields.end(), kColumns.begin());
      if (!six && !seven) {
        throw DataError(where(line_no) + "expected header 'id,path,class,player,frames,duration[,split]'");
      }
      have_split_column = seven;
      have_header = true;
      continue;
    }
    const std::size_t expected = have_split_column ? 7 : 6;
    if (fields.size() != expected) {
      throw DataError(where(line_no) + "expected " + std::to_string(expected) + " fields, got " +
                      std::to_string(fields.size()));
    }
    VideoRecord r;
    r.id = fields[0];
    r.path = fields[1];
    r.class_label = fields[2];
    r.player_id = fields[3];
    if (r.id.empty()) throw DataError(where(line_no) + "empty record id");
    if (!ids.insert(r.id).second) throw DataError(where(line_no) + "duplicate record id '" + r.id + "'");
    if (r.path.empty()) throw DataError(where(line_no) + "record '" + r.id + "' has no path");
    auto idx = m.class_index(r.class_label);
    if (!idx) {
      if (classes_declared) {
        throw DataError(where(line_no) + "record '" + r.id + "' has label '" + r.class_label +
                        "' that is not in the class list");
      }
      m.classes.push_back(r.class_label);
      idx = static_cast<int>(m.classes.size() - 1);
    }
    r.class_index = *idx;
    try {
      r.frame_count = fields[4].empty() ? 0 : static_cast<int>(kv::parse_int("frames", fields[4]));
      r.duration = fields[5].empty() ? 0.0 : kv::parse_real("duration", fields[5]);
      if (have_split_column) r.split = parse_split(fields[6]);
    } catch (const Error& e) {
      throw DataError(where(line_no) + "record '" + r.id + "': " + e.what());
    }
    const bool unprobed = fields[4].empty() && fields[5].empty();
    if (!(unprobed && options.allow_unprobed)) {
      if (r.frame_count <= 0) throw DataError(where(line_no) + "record '" + r.id + "' needs frames > 0");
      if (!(r.duration > 0) || !std::isfinite(r.duration)) {
        throw DataError(where(line_no) + "record '" + r.id + "' needs duration > 0");
      }
    }
    m.records.push_back(std::move(r));
  }
  if (!have_header) throw DataError(origin + ": missing header row");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto m = parse_manifest(buf.str(), path.string(), options);
  m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "# sfk-manifest: " << kManifestVersion << "\n";
  out << "# classes: " << kv::join(m.classes) << "\n";
  if (!m.source_note.empty()) out << "# source: " << m.source_note << "\n";
  out << "id,path,class,player,frames,duration,split\n";
  for (const auto& r : m.records) {
    out << r.id << ',' << r.path << ',' << r.class_label << ',' << r.player_id << ',';
    if (r.frame_count > 0 || r.duration > 0) out << r.frame_count << ',' << kv::format_real(r.duration);
    else out << ',';
    out << ',' << to_string(r.split) << "\n";
  }
  return out.str();
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  for (const auto& c : manifest.classes) {
    if (c.find(',') != std::string::npos) throw DataError("class name '" + c + "' contains a comma");
  }
  for (const auto& r : manifest.records) {
    for (const auto* f : {&r.id, &r.path, &r.player_id}) {
      if (f->find(',') != std::string::npos) throw DataError("record field '" + *f + "' contains a comma");
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << format_manifest(manifest);
}

}  // namespace sfk::data
