#pragma once

// Flat `key = value` text configs. `#` starts a comment; keys may repeat
// (used for scene primitives), in which case get() returns the last value.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sugvoxel/error.hpp"

namespace sugvoxel {

namespace config_detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

class Config {
 public:
  static Config parse(std::string_view text) {
    Config cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = config_detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      require(eq != std::string_view::npos, ErrorCode::config_error,
              "line " + std::to_string(line_no) + ": expected `key = value`");
      const auto key = config_detail::trim(line.substr(0, eq));
      const auto value = config_detail::trim(line.substr(eq + 1));
      require(!key.empty(), ErrorCode::config_error, "line " + std::to_string(line_no) + ": empty key");
      cfg.values_[std::string(key)].emplace_back(value);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = {std::move(value)}; }

  const std::vector<std::string>& all(const std::string& key) const {
    static const std::vector<std::string> kEmpty;
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? kEmpty : it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto& v = all(key);
    return v.empty() ? fallback : v.back();
  }

  double get_double(const std::string& key, double fallback) const {
    const auto& v = all(key);
    return v.empty() ? fallback : to_double(key, v.back());
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto& v = all(key);
    return v.empty() ? fallback : to_int(key, v.back());
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto& v = all(key);
    if (v.empty()) return fallback;
    if (v.back() == "true" || v.back() == "1") return true;
    if (v.back() == "false" || v.back() == "0") return false;
    throw Error(ErrorCode::config_error, key + ": expected a boolean, got `" + v.back() + "`");
  }

  // Whitespace- or comma-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto& v = all(key);
    if (v.empty()) return fallback;
    std::vector<double> out;
    for (const auto& tok : split(v.back())) out.push_back(to_double(key, tok));
    return out;
  }

  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',' || ch == ' ' || ch == '\t') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  static double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorCode::config_error,
            key + ": expected a number, got `" + s + "`");
    return v;
  }

  static std::int64_t to_int(const std::string& key, const std::string& s) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorCode::config_error,
            key + ": expected an integer, got `" + s + "`");
    return v;
  }

 private:
  std::map<std::string, std::vector<std::string>> values_;
  mutable std::set<std::string> used_;
};

}  // namespace sugvoxel
