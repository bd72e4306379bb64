#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sfk {

/// Ordered `key = value` document. Lines starting with '#' are comments.
class KeyValueDoc {
 public:
  static KeyValueDoc parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValueDoc load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Applies a `key=value` override string.
  void apply_override(const std::string& assignment);

  std::string to_string(const std::string& header = {}) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace kv {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);

long parse_int(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<long> parse_int_list(const std::string& key, const std::string& value);
std::vector<double> parse_real_list(const std::string& key, const std::string& value);

std::string format_real(double v);
template <typename T>
std::string join(const std::vector<T>& values, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>) {
      out += format_real(values[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += values[i];
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

}  // namespace kv
}  // namespace sfk
