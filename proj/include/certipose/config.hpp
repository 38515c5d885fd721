#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace certipose {

/**
 * @brief Flat key/value settings read from a sectioned text file.
 *
 * Syntax: `[section]` headers, `key = value` lines, `#` or `;` comment
 * lines, trailing `#` comments, values optionally in single or double
 * quotes. This is the flat subset of TOML. Keys are stored as `section.key` (or `key` before any header). Later
 * assignments replace earlier ones.
 */
class Config {
 public:
  static Config parse(std::istream& in);
  static Config load(const std::string& path);

  /// Applies `section.key=value`; throws std::invalid_argument on bad syntax.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma- or space-separated reals, optionally in square brackets.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws std::invalid_argument naming the first key not in `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace certipose
