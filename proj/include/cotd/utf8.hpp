#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cotd::utf8 {

// Byte length of the code point starting with lead byte `c`. Malformed lead
// bytes count as a single byte so scanning always makes progress.
inline std::size_t sequence_length(unsigned char c) noexcept {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

inline std::size_t char_length_at(std::string_view s, std::size_t pos) noexcept {
  std::size_t n = sequence_length(static_cast<unsigned char>(s[pos]));
  return pos + n <= s.size() ? n : s.size() - pos;
}

inline std::vector<std::string_view> split_chars(std::string_view s) {
  std::vector<std::string_view> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    std::size_t n = char_length_at(s, i);
    out.push_back(s.substr(i, n));
    i += n;
  }
  return out;
}

inline std::size_t length(std::string_view s) noexcept {
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size(); i += char_length_at(s, i)) ++count;
  return count;
}

}  // namespace cotd::utf8
