#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotd/answer.hpp"
#include "cotd/error.hpp"
#include "cotd/teacher.hpp"
#include "cotd/transfer.hpp"

namespace cotd {

struct Question {
  std::string id;
  std::string text;
  std::string gold_answer;

  bool operator==(const Question&) const = default;
};

inline Question question_from_json(const nlohmann::json& j) {
  Question q;
  q.id = j.at("id").get<std::string>();
  q.text = j.at("question").get<std::string>();
  const auto& a = j.at("answer");
  const std::string raw = a.is_string() ? a.get<std::string>() : a.dump();
  auto norm = normalize_answer(raw);
  if (!norm) throw ValidationError("question " + q.id + ": answer '" + raw + "' is not a number");
  q.gold_answer = *norm;
  return q;
}

inline nlohmann::json to_json(const Question& q) {
  return {{"id", q.id}, {"question", q.text}, {"answer", q.gold_answer}};
}

struct Solution {
  std::string question_id;
  std::size_t sample_index = 0;
  std::string cot_text;
  std::optional<std::string> extracted_answer;
  std::optional<std::vector<TeacherStep>> teacher_steps;
  bool correct = false;

  bool operator==(const Solution&) const = default;
};

/// Splits a completion into its reasoning (text before the last "the answer
/// is", trimmed) and scores the extracted answer against the gold one.
inline Solution make_solution(const Question& q, std::size_t sample_index, const Completion& c) {
  Solution s;
  s.question_id = q.id;
  s.sample_index = sample_index;
  s.extracted_answer = extract_answer(c.text);
  std::string lower = c.text;
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  const auto at = lower.rfind(kAnswerMarker);
  std::string cot = at == std::string::npos ? c.text : c.text.substr(0, at);
  while (!cot.empty() && std::isspace(static_cast<unsigned char>(cot.back()))) cot.pop_back();
  s.cot_text = std::move(cot);
  if (!c.steps.empty()) s.teacher_steps = c.steps;
  s.correct = s.extracted_answer && answers_match(*s.extracted_answer, q.gold_answer);
  return s;
}

/// `{question_id, sample_index, cot, answer, correct, steps?}`; a missing
/// answer is written as null.
inline nlohmann::json to_json(const Solution& s) {
  nlohmann::json j = {{"question_id", s.question_id},
                      {"sample_index", s.sample_index},
                      {"cot", s.cot_text},
                      {"answer", s.extracted_answer ? nlohmann::json(*s.extracted_answer)
                                                    : nlohmann::json(nullptr)},
                      {"correct", s.correct}};
  if (s.teacher_steps) j["steps"] = steps_to_json(*s.teacher_steps);
  return j;
}

inline Solution solution_from_json(const nlohmann::json& j) {
  Solution s;
  s.question_id = j.at("question_id").get<std::string>();
  s.sample_index = j.at("sample_index").get<std::size_t>();
  s.cot_text = j.at("cot").get<std::string>();
  if (j.contains("answer") && !j.at("answer").is_null())
    s.extracted_answer = j.at("answer").get<std::string>();
  s.correct = j.at("correct").get<bool>();
  if (j.contains("steps")) s.teacher_steps = steps_from_json(j.at("steps"));
  return s;
}

enum class FormatTag { B1_incontext_answer_only, B2_incontext_cot, B3_zeroshot_answer_only, B4_zeroshot_cot };

inline constexpr FormatTag kAllFormats[] = {FormatTag::B1_incontext_answer_only, FormatTag::B2_incontext_cot,
                                            FormatTag::B3_zeroshot_answer_only, FormatTag::B4_zeroshot_cot};

inline std::string_view short_name(FormatTag t) noexcept {
  switch (t) {
    case FormatTag::B1_incontext_answer_only: return "B1";
    case FormatTag::B2_incontext_cot: return "B2";
    case FormatTag::B3_zeroshot_answer_only: return "B3";
    case FormatTag::B4_zeroshot_cot: return "B4";
  }
  return "?";
}

inline std::string_view to_string(FormatTag t) noexcept {
  switch (t) {
    case FormatTag::B1_incontext_answer_only: return "B1_incontext_answer_only";
    case FormatTag::B2_incontext_cot: return "B2_incontext_cot";
    case FormatTag::B3_zeroshot_answer_only: return "B3_zeroshot_answer_only";
    case FormatTag::B4_zeroshot_cot: return "B4_zeroshot_cot";
  }
  return "?";
}

/// Accepts "B2" or "B2_incontext_cot".
inline FormatTag parse_format_tag(std::string_view s) {
  for (auto t : kAllFormats)
    if (s == short_name(t) || s == to_string(t)) return t;
  throw ValidationError("unknown format tag '" + std::string(s) + "'");
}

inline bool is_in_context(FormatTag t) noexcept {
  return t == FormatTag::B1_incontext_answer_only || t == FormatTag::B2_incontext_cot;
}

inline bool has_cot(FormatTag t) noexcept {
  return t == FormatTag::B2_incontext_cot || t == FormatTag::B4_zeroshot_cot;
}

struct FormattedInstance {
  FormatTag format_tag = FormatTag::B4_zeroshot_cot;
  std::string question_id;
  std::string input_text;
  std::string output_text;
  std::optional<TargetSequence> target_seq;

  bool operator==(const FormattedInstance&) const = default;
};

/// `{format, input, output, question_id}`
inline nlohmann::json to_json(const FormattedInstance& f) {
  return {{"format", to_string(f.format_tag)},
          {"input", f.input_text},
          {"output", f.output_text},
          {"question_id", f.question_id}};
}

inline FormattedInstance instance_from_json(const nlohmann::json& j) {
  FormattedInstance f;
  f.format_tag = parse_format_tag(j.at("format").get<std::string>());
  f.input_text = j.at("input").get<std::string>();
  f.output_text = j.at("output").get<std::string>();
  f.question_id = j.at("question_id").get<std::string>();
  return f;
}

}  // namespace cotd
