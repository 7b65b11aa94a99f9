#pragma once

#include "ncl/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ncl {

/// Key = value text tree. Blocks nest with `name { ... }`, keys may also be
/// dotted, `#` starts a comment, arrays use `[a, b, [c, d]]` and may span
/// lines. Internally every leaf is stored under its full dotted key.
///
///   model {
///     preset = one_hot
///     num_classes = 5
///   }
///   train.learning_rate = 0.5
class Config {
 public:
  /// Throws ParseError with a line number.
  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::filesystem::path& path);

  /// One `key = value` line per leaf, keys sorted; parse(serialize()) == *this.
  std::string serialize() const;
  nlohmann::json to_json() const;

  /// `assignment` is `key=value`, as given to --set.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& raw);
  /// Entries of `other` replace ours.
  void merge(const Config& other);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& raw(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<long long> get_ints(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  Matrix get_matrix(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  bool operator==(const Config& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Formats doubles with 17 significant digits.
std::string format_double(double v);

}  // namespace ncl
