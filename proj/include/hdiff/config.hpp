#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hdiff {

/// Flat `key=value` text, one entry per line. `#` starts a comment.
///
/// Typed getters throw ConfigError on malformed values. Keys are remembered
/// as they are read so callers can reject entries nobody asked for.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(std::istream& in, const std::string& origin = "<input>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  /// Copies every entry of `other` over this one.
  void merge(const KeyValues& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_uints(const std::string& key,
                                       const std::vector<std::uint64_t>& fallback) const;

  /// Keys present in the file but never read through a getter.
  std::vector<std::string> unread_keys() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> read_;
};

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

}  // namespace hdiff
