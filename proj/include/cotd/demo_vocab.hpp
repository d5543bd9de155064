#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "cotd/token.hpp"

namespace cotd::demo {

// Words that dominate the mock teacher's questions and reasoning chains.
inline constexpr std::array<std::string_view, 64> kLexicon = {
    "the",     "answer",   "is",      "has",     "have",    "he",     "she",
    "so",      "then",     "now",     "more",    "away",    "after",  "buying",
    "giving",  "getting",  "gets",    "buys",    "gives",   "times",  "as",
    "many",    "how",      "does",    "starts",  "with",    "of",     "and",
    "a",       "total",    "left",    "apples",  "bananas", "marbles", "pencils",
    "cookies", "stickers", "books",   "cards",   "fruits",  "tom",    "anna",
    "ben",     "lily",     "sam",     "mia",     "jack",    "emma",   "question",
    "in",      "to",       "we",      "it",      "each",    "are",    "there",
    "for",     "that",     "this",    "number",  "what",    "all",    "one",
    "two",
};

inline std::string capitalized(std::string_view w) {
  std::string out(w);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

inline void push_unique(std::vector<std::string>& v, std::string s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(std::move(s));
}

// Printable ASCII except space; both vocabularies cover it one char at a time.
inline std::vector<std::string> ascii_chars() {
  std::vector<std::string> out;
  for (char c = 0x21; c <= 0x7e; ++c) out.emplace_back(1, c);
  return out;
}

/// Coarse GPT-style vocabulary: whole words (with and without the "Ġ" space
/// marker), whole numbers 0..999.
inline Vocabulary teacher_vocabulary() {
  const std::string m = "\xC4\xA0";  // Ġ
  std::vector<std::string> s = ascii_chars();
  push_unique(s, m);
  for (const auto& c : ascii_chars()) push_unique(s, m + c);
  for (auto w : kLexicon) {
    push_unique(s, std::string(w));
    push_unique(s, m + std::string(w));
    push_unique(s, capitalized(w));
    push_unique(s, m + capitalized(w));
  }
  for (int n = 10; n < 1000; ++n) {
    push_unique(s, std::to_string(n));
    push_unique(s, m + std::to_string(n));
  }
  push_unique(s, ":");
  push_unique(s, ".\n");
  return Vocabulary("demo-teacher", std::move(s), m);
}

/// Fine T5-style vocabulary: "▁" marker, short words whole, longer words cut
/// into three-byte pieces, numbers digit by digit.
inline Vocabulary student_vocabulary() {
  const std::string m = "\xE2\x96\x81";  // ▁
  std::vector<std::string> s = ascii_chars();
  push_unique(s, m);
  for (const auto& c : ascii_chars()) push_unique(s, m + c);
  for (auto w : kLexicon) {
    for (const std::string& form : {std::string(w), capitalized(w)}) {
      if (form.size() <= 3) {
        push_unique(s, form);
        push_unique(s, m + form);
        continue;
      }
      push_unique(s, m + form.substr(0, 3));
      for (std::size_t i = 3; i < form.size(); i += 3) push_unique(s, form.substr(i, 3));
    }
  }
  return Vocabulary("demo-student", std::move(s), m);
}

}  // namespace cotd::demo
