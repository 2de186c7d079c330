#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mpt {

/// Line-oriented `key = value` text. Blank lines and lines starting with '#'
/// are ignored; keys may not repeat. Used for config files, generator specs,
/// reports and per-clip metadata.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const;

  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::size_t size_value(const std::string& key) const;
  double double_value(const std::string& key) const;
  std::vector<std::size_t> size_list(const std::string& key) const;
  std::vector<double> double_list(const std::string& key) const;

  /// Throws InputError naming the first key outside `known`.
  void require_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  void set(const std::string& key, std::string value);

  /// `key = value` lines in key order; parse(to_text()) round-trips.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// `v` with exactly one decimal (the caller rounds first).
std::string format_fixed1(double v);

/// Space-separated values.
std::string join_sizes(const std::vector<std::size_t>& values);
std::string join_doubles(const std::vector<double>& values);

std::size_t parse_size(std::string_view text);
double parse_double(std::string_view text);
std::vector<std::string_view> split_ws(std::string_view text);

}  // namespace mpt
