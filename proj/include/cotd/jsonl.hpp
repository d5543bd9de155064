#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotd/error.hpp"

namespace cotd::jsonl {

using json = nlohmann::json;

/// Probabilities are written with 17 significant digits so every double
/// survives a write/read cycle bit-exactly.
inline std::string format_probability(double p) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

inline std::string quote(std::string_view s) { return json(std::string(s)).dump(); }

inline void for_each_line(const std::string& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(j, lineno);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::vector<json> read_all(const std::string& path) {
  std::vector<json> rows;
  for_each_line(path, [&](const json& j, std::size_t) { rows.push_back(j); });
  return rows;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

/// Line-oriented writer that fails loudly.
class Writer {
public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + path);
  }
  void line(std::string_view s) {
    out_ << s << '\n';
    if (!out_) throw IoError("write failed: " + path_);
  }
  void row(const json& j) { line(j.dump()); }

private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace cotd::jsonl
