#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotd/transfer.hpp"

namespace cotd {

struct DecodeParams {
  std::size_t max_tokens = 256;
  double temperature = 0.7;
  std::size_t top_logprobs = 5;
};

/// `n` samples for one prompt. Sample indices run from `first_sample` to
/// `first_sample + n - 1`; deterministic clients key their output on them.
struct CompletionRequest {
  std::string prompt;
  std::size_t n = 1;
  std::size_t first_sample = 0;
  DecodeParams params;
};

struct Completion {
  std::string text;
  std::vector<TeacherStep> steps;

  bool operator==(const Completion&) const = default;
};

/// Anything that can sample completions with per-step top-k records.
class TeacherClient {
public:
  virtual ~TeacherClient() = default;
  /// Returns exactly `request.n` completions in sample order.
  virtual std::vector<Completion> complete(const CompletionRequest& request) = 0;
};

inline nlohmann::json steps_to_json(const std::vector<TeacherStep>& steps) {
  auto arr = nlohmann::json::array();
  for (const auto& s : steps) {
    auto top = nlohmann::json::array();
    for (const auto& [surface, p] : s.top_k) top.push_back({surface, p});
    arr.push_back({{"token", s.chosen_surface}, {"top", std::move(top)}});
  }
  return arr;
}

inline std::vector<TeacherStep> steps_from_json(const nlohmann::json& arr) {
  std::vector<TeacherStep> steps;
  steps.reserve(arr.size());
  for (const auto& s : arr) {
    TeacherStep step;
    step.chosen_surface = s.at("token").get<std::string>();
    for (const auto& pair : s.at("top"))
      step.top_k.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
    steps.push_back(std::move(step));
  }
  return steps;
}

inline nlohmann::json completion_to_json(const Completion& c) {
  return {{"text", c.text}, {"steps", steps_to_json(c.steps)}};
}

inline Completion completion_from_json(const nlohmann::json& j) {
  return {j.at("text").get<std::string>(), steps_from_json(j.at("steps"))};
}

}  // namespace cotd
