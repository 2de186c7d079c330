#include "mpt/kv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "mpt/error.hpp"

namespace mpt {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InputError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw InputError("line " + std::to_string(line_no) + ": empty key");
    if (kv.values_.contains(key)) throw InputError("line " + std::to_string(line_no) + ": duplicate key " + key);
    kv.values_.emplace(std::move(key), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

const std::string& KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InputError("missing key: " + key);
  return it->second;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
  return has(key) ? size_value(key) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? static_cast<std::uint64_t>(size_value(key)) : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? double_value(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError("key " + key + ": expected true/false, got '" + v + "'");
}

std::size_t KeyValues::size_value(const std::string& key) const {
  try {
    return parse_size(get(key));
  } catch (const InputError& e) {
    throw InputError("key " + key + ": " + e.what());
  }
}

double KeyValues::double_value(const std::string& key) const {
  try {
    return parse_double(get(key));
  } catch (const InputError& e) {
    throw InputError("key " + key + ": " + e.what());
  }
}

std::vector<std::size_t> KeyValues::size_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (auto tok : split_ws(get(key))) out.push_back(parse_size(tok));
  return out;
}

std::vector<double> KeyValues::double_list(const std::string& key) const {
  std::vector<double> out;
  for (auto tok : split_ws(get(key))) out.push_back(parse_double(tok));
  return out;
}

void KeyValues::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.contains(key)) throw InputError("unknown key: " + key);
  }
}

void KeyValues::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t v : values) out += (out.empty() ? "" : " ") + std::to_string(v);
  return out;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (double v : values) out += (out.empty() ? "" : " ") + format_double(v);
  return out;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string format_fixed1(double v) {
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.1f", v);
  return buf.data();
}

std::size_t parse_size(std::string_view text) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw InputError("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text) {
  double v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty() || !std::isfinite(v)) {
    throw InputError("expected a finite number, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t') ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace mpt
