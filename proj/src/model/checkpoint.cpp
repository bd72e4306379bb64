#include "sfk/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "sfk/error.hpp"

namespace sfk::model {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'K', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("truncated file");
    return v;
  }

  std::string get_string(std::uint64_t limit = (1ull << 30)) {
    const auto n = get<std::uint64_t>();
    if (n > limit) fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) fail("truncated file");
    return s;
  }

  void read_doubles(double* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) fail("truncated parameter data");
  }

  [[noreturn]] void fail(const std::string& why) const { throw DataError("checkpoint " + origin_ + ": " + why); }

 private:
  std::istream& in_;
  std::string origin_;
};

std::string meta_text(const CheckpointMeta& meta) {
  KeyValueDoc doc;
  doc.set("epoch", std::to_string(meta.epoch));
  doc.set("train_error", kv::format_real(meta.train_error));
  doc.set("val_error", kv::format_real(meta.val_error));
  doc.set("val_seed", std::to_string(meta.val_seed));
  for (const auto& [k, v] : meta.train_config.entries()) doc.set("train." + k, v);
  return doc.to_string();
}

CheckpointMeta parse_meta(const std::string& text, const std::string& origin) {
  const auto doc = KeyValueDoc::parse(text, origin);
  CheckpointMeta meta;
  for (const auto& [k, v] : doc.entries()) {
    if (k == "epoch") {
      meta.epoch = static_cast<int>(kv::parse_int(k, v));
    } else if (k == "train_error") {
      meta.train_error = kv::parse_real(k, v);
    } else if (k == "val_error") {
      meta.val_error = kv::parse_real(k, v);
    } else if (k == "val_seed") {
      meta.val_seed = std::stoull(v);
    } else if (k.rfind("train.", 0) == 0) {
      meta.train_config.set(k.substr(6), v);
    }
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SlowFastNetwork& network, const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, network.config().to_kv().to_string());
    put_string(out, meta_text(meta));
    const auto params = network.parameters();
    put<std::uint64_t>(out, params.size());
    for (const auto* p : params) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
      for (auto d : p->value.shape()) put<std::int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.numel() * static_cast<std::int64_t>(sizeof(double))));
    }
    if (!out) throw DataError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));

  const auto config_doc = KeyValueDoc::parse(r.get_string(), path.string() + "[config]");
  const SlowFastConfig config = config_from_entries(config_doc.entries());
  LoadedCheckpoint loaded;
  loaded.meta = parse_meta(r.get_string(), path.string() + "[meta]");
  loaded.network = std::make_unique<SlowFastNetwork>(config, 0);

  std::map<std::string, Parameter*> by_name;
  for (auto* p : loaded.network->parameters()) by_name[p->name] = p;
  const auto count = r.get<std::uint64_t>();
  if (count != by_name.size()) {
    r.fail("has " + std::to_string(count) + " tensors, network expects " + std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) r.fail("implausible tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::int64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) r.fail("unexpected tensor '" + name + "'");
    if (it->second->value.shape() != shape) {
      r.fail("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
             shape_string(it->second->value.shape()));
    }
    r.read_doubles(it->second->value.data(), static_cast<std::size_t>(it->second->value.numel()));
  }
  return loaded;
}

}  // namespace sfk::model
