#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cotd {

namespace detail {

inline bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

struct NumberSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Numbers as they appear in reasoning text: optional sign, digits with
// optional thousands separators ("1,234"), optional fractional part.
inline std::vector<NumberSpan> scan_numbers(std::string_view s, std::size_t from = 0) {
  std::vector<NumberSpan> out;
  std::size_t i = from;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    if (begin > from && s[begin - 1] == '-' && (begin < 2 || !is_digit(s[begin - 2]))) --begin;
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    // Thousands groups: a comma followed by exactly three digits.
    while (j + 3 < s.size() && s[j] == ',' && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
           is_digit(s[j + 3]) && (j + 4 >= s.size() || !is_digit(s[j + 4])))
      j += 4;
    if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
      j += 1;
      while (j < s.size() && is_digit(s[j])) ++j;
    }
    out.push_back({begin, j});
    i = j;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

inline constexpr std::string_view kAnswerMarker = "the answer is";

/// Canonical text of one numeric answer: currency symbols, thousands
/// separators, whitespace and trailing periods removed. Absent when the text
/// holds no number.
inline std::optional<std::string> normalize_answer(std::string_view raw) {
  std::string s;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(raw[i]);
    if (c == '$' || c == ',' || std::isspace(c)) continue;
    // UTF-8 currency signs: € (E2 82 AC), £ (C2 A3), ¥ (C2 A5).
    if (c == 0xE2 && raw.substr(i, 3) == "\xE2\x82\xAC") { i += 2; continue; }
    if (c == 0xC2 && i + 1 < raw.size() && (raw[i + 1] == '\xA3' || raw[i + 1] == '\xA5')) { ++i; continue; }
    s.push_back(static_cast<char>(c));
  }
  while (!s.empty() && s.back() == '.') s.pop_back();
  auto spans = detail::scan_numbers(s);
  if (spans.empty()) return std::nullopt;
  return s.substr(spans.front().begin, spans.front().end - spans.front().begin);
}

/// Final answer of a reasoning chain: the first number after the last
/// case-insensitive "the answer is", else the last number in the text.
inline std::optional<std::string> extract_answer(std::string_view cot_text) {
  const std::string low = detail::lower(cot_text);
  std::vector<detail::NumberSpan> spans;
  if (auto at = low.rfind(kAnswerMarker); at != std::string::npos) {
    spans = detail::scan_numbers(cot_text, at + kAnswerMarker.size());
    if (!spans.empty()) spans.resize(1);
  }
  if (spans.empty()) {
    spans = detail::scan_numbers(cot_text);
    if (spans.empty()) return std::nullopt;
    spans.erase(spans.begin(), spans.end() - 1);
  }
  return normalize_answer(cot_text.substr(spans[0].begin, spans[0].end - spans[0].begin));
}

/// Comparison key: normalized text with a trailing ".0*" fraction and a
/// negative zero folded, so "13", "13.00" and "$13" compare equal.
inline std::optional<std::string> answer_key(std::string_view raw) {
  auto n = normalize_answer(raw);
  if (!n) return std::nullopt;
  std::string s = *n;
  if (auto dot = s.find('.'); dot != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  std::size_t lead = (s[0] == '-') ? 1 : 0;
  while (s.size() > lead + 1 && s[lead] == '0' && detail::is_digit(s[lead + 1])) s.erase(lead, 1);
  if (s == "-0") s = "0";
  return s;
}

/// Whether two answers denote the same number under the shared normalization.
inline bool answers_match(std::string_view a, std::string_view b) {
  auto ka = answer_key(a);
  auto kb = answer_key(b);
  return ka && kb && *ka == *kb;
}

}  // namespace cotd
