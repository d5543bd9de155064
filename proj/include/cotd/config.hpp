#pragma once

#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "cotd/error.hpp"

namespace cotd {

/// One `key = value` entry. `scope` is the part before a dot in
/// `scope.key = value` (empty when unscoped).
struct ConfigEntry {
  std::string scope;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat `key = value` text: `#` starts a comment line, blank lines are
/// skipped, keys fold `_` to `-`, and values may be wrapped in double quotes.
inline std::vector<ConfigEntry> parse_config(std::istream& in) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  std::vector<ConfigEntry> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    ConfigEntry e;
    e.line = lineno;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    if (e.value.size() >= 2 && e.value.front() == '"' && e.value.back() == '"')
      e.value = e.value.substr(1, e.value.size() - 2);
    if (const auto dot = e.key.find('.'); dot != std::string::npos) {
      e.scope = e.key.substr(0, dot);
      e.key = e.key.substr(dot + 1);
    }
    for (auto& c : e.key)
      if (c == '_') c = '-';
    if (e.key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ConfigEntry> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in);
}

}  // namespace cotd
