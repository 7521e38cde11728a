#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace feed {

// Flat key=value settings. Only keys from valid_keys() are accepted.
class Config {
 public:
  static const std::vector<std::string>& valid_keys();

  // ConfigError listing the valid keys when `key` is unknown.
  void set(const std::string& key, const std::string& value);
  // One pair per line; '#' starts a comment; blank lines are skipped.
  void load_file(const std::filesystem::path& path);
  // "key=value" or "--key=value".
  void apply_override(std::string_view arg);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string str(const std::string& key, const std::string& fallback = "") const;
  long long integer(const std::string& key, long long fallback) const;
  double real(const std::string& key, double fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  // Comma-separated, empty items dropped.
  std::vector<std::string> list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace feed
