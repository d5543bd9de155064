#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "cotd/corpus_types.hpp"
#include "cotd/demo_vocab.hpp"
#include "cotd/rng.hpp"
#include "cotd/teacher.hpp"
#include "cotd/token.hpp"

namespace cotd {

/// Arithmetic word problem in the mock grammar: a starting amount followed by
/// one to three operations.
struct ArithmeticProblem {
  enum class Op { add, subtract, multiply };
  struct Step {
    Op op;
    long operand;
  };

  std::string name;
  std::string item;
  long start = 0;
  std::vector<Step> steps;

  const char* pronoun() const {
    static const std::vector<std::string> she = {"Anna", "Lily", "Mia", "Emma"};
    return std::find(she.begin(), she.end(), name) != she.end() ? "she" : "he";
  }

  long answer() const {
    long v = start;
    for (const auto& s : steps) v = apply(v, s);
    return v;
  }

  static long apply(long v, const Step& s) {
    switch (s.op) {
      case Op::add: return v + s.operand;
      case Op::subtract: return v - s.operand;
      case Op::multiply: return v * s.operand;
    }
    return v;
  }

  std::string question_text() const {
    std::string p = demo::capitalized(pronoun());
    std::string q = name + " has " + std::to_string(start) + " " + item + ".";
    for (const auto& s : steps) {
      const std::string n = std::to_string(s.operand);
      switch (s.op) {
        case Op::add: q += " " + p + " buys " + n + " more " + item + "."; break;
        case Op::subtract: q += " " + p + " gives away " + n + " " + item + "."; break;
        case Op::multiply: q += " " + p + " gets " + n + " times as many " + item + "."; break;
      }
    }
    q += " How many " + item + " does " + name + " have now?";
    return q;
  }

  /// The worked chain without its final answer sentence.
  std::string reasoning() const {
    const std::string he = pronoun();
    std::string r = name + " starts with " + std::to_string(start) + " " + item + ".";
    long v = start;
    for (const auto& s : steps) {
      const long next = apply(v, s);
      const std::string a = std::to_string(v), b = std::to_string(s.operand),
                        c = std::to_string(next);
      switch (s.op) {
        case Op::add:
          r += " After buying " + b + " more, " + he + " has " + a + " + " + b + " = " + c + " " + item + ".";
          break;
        case Op::subtract:
          r += " After giving away " + b + ", " + he + " has " + a + " - " + b + " = " + c + " " + item + ".";
          break;
        case Op::multiply:
          r += " After getting " + b + " times as many, " + he + " has " + a + " * " + b + " = " + c + " " + item + ".";
          break;
      }
      v = next;
    }
    return r;
  }

  static std::optional<ArithmeticProblem> parse(const std::string& text) {
    static const std::regex head(R"(^\s*([A-Z][a-z]+) has (\d+) ([a-z]+)\.)");
    static const std::regex step(
        R"(^\s*(?:He|She) (?:buys (\d+) more [a-z]+|gives away (\d+) [a-z]+|gets (\d+) times as many [a-z]+)\.)");
    static const std::regex tail(R"(^\s*How many [a-z]+ does [A-Z][a-z]+ have now\?\s*$)");
    std::smatch m;
    if (!std::regex_search(text, m, head)) return std::nullopt;
    ArithmeticProblem p;
    p.name = m[1];
    p.start = std::stol(m[2]);
    p.item = m[3];
    std::string rest = m.suffix();
    while (std::regex_search(rest, m, step)) {
      if (m[1].matched) p.steps.push_back({Op::add, std::stol(m[1])});
      else if (m[2].matched) p.steps.push_back({Op::subtract, std::stol(m[2])});
      else p.steps.push_back({Op::multiply, std::stol(m[3])});
      rest = m.suffix();
    }
    if (p.steps.empty() || !std::regex_match(rest, tail)) return std::nullopt;
    return p;
  }

  static ArithmeticProblem random(Rng& rng) {
    static const std::vector<std::string> names = {"Tom", "Anna", "Ben", "Lily",
                                                   "Sam", "Mia",  "Jack", "Emma"};
    static const std::vector<std::string> items = {"apples",  "bananas",  "marbles", "pencils",
                                                   "cookies", "stickers", "books",   "cards"};
    ArithmeticProblem p;
    p.name = names[rng.below(names.size())];
    p.item = items[rng.below(items.size())];
    p.start = 2 + static_cast<long>(rng.below(19));
    const std::size_t ops = 1 + rng.below(3);
    long v = p.start;
    for (std::size_t k = 0; k < ops; ++k) {
      Step s{};
      const auto pick = rng.below(3);
      if (pick == 2 && v <= 250) s = {Op::multiply, 2 + static_cast<long>(rng.below(3))};
      else if (pick == 1 && v > 1) s = {Op::subtract, 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(v - 1)))};
      else s = {Op::add, 1 + static_cast<long>(rng.below(15))};
      v = apply(v, s);
      p.steps.push_back(s);
    }
    return p;
  }
};

/// Mock question set; ids are zero-padded so lexical and numeric order agree.
inline std::vector<Question> synthesize_questions(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mock-questions"));
  std::vector<Question> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto p = ArithmeticProblem::random(rng);
    char id[32];
    std::snprintf(id, sizeof id, "mock-%05zu", i);
    out.push_back({id, p.question_text(), std::to_string(p.answer())});
  }
  return out;
}

struct MockTeacherConfig {
  /// Probability that a sample's final answer is replaced by a wrong one.
  double error_rate = 0.0;
  /// Range of the probability mass the teacher leaves off its chosen token.
  double min_epsilon = 0.02;
  double max_epsilon = 0.25;
  /// Share of that mass that falls outside the top five.
  double tail_share = 0.05;
  std::uint64_t seed = 0;
};

/// Offline teacher: solves mock-grammar questions exactly, corrupts final
/// answers at the configured rate, and fabricates top-5 records in which the
/// chosen token has probability 1 - eps. Output depends only on (prompt,
/// sample index, config).
class MockTeacher final : public TeacherClient {
public:
  explicit MockTeacher(MockTeacherConfig config = {},
                       Vocabulary vocab = demo::teacher_vocabulary())
      : config_(config), vocab_(std::move(vocab)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i)
      pool_.push_back(normalize_surface(vocab_.surface(static_cast<TokenId>(i)), vocab_.marker()));
  }

  std::vector<Completion> complete(const CompletionRequest& request) override {
    std::vector<Completion> out;
    out.reserve(request.n);
    const auto problem = ArithmeticProblem::parse(target_question(request.prompt));
    for (std::size_t k = 0; k < request.n; ++k) {
      const std::size_t index = request.first_sample + k;
      Rng rng(derive_seed(config_.seed ^ fnv1a(request.prompt),
                          "mock-sample/" + std::to_string(index)));
      std::string text;
      const bool wrong = rng.uniform() < config_.error_rate;
      if (problem) {
        long answer = problem->answer();
        if (wrong) {
          const long delta = 1 + static_cast<long>(rng.below(5));
          answer = (rng.below(2) == 0 && answer - delta > 0) ? answer - delta : answer + delta;
        }
        text = problem->reasoning() + " The answer is " + std::to_string(answer);
      } else {
        text = "I cannot work this one out. The answer is 0";
      }
      out.push_back(fabricate(text, request.params, rng));
    }
    return out;
  }

  const Vocabulary& vocabulary() const noexcept { return vocab_; }

  /// Question body of the last "Question:" block in a prompt.
  static std::string target_question(const std::string& prompt) {
    static constexpr std::string_view kTag = "Question:";
    auto at = prompt.rfind(kTag);
    std::string q = at == std::string::npos ? prompt : prompt.substr(at + kTag.size());
    if (auto end = q.find("\nAnswer:"); end != std::string::npos) q.resize(end);
    const auto b = q.find_first_not_of(" \n\t");
    const auto e = q.find_last_not_of(" \n\t");
    return b == std::string::npos ? std::string() : q.substr(b, e - b + 1);
  }

private:
  Completion fabricate(const std::string& full_text, const DecodeParams& params, Rng& rng) const {
    const TokenSequence seq = encode(full_text, vocab_);
    const std::size_t keep = std::min(seq.size(), params.max_tokens);
    const std::size_t k = std::clamp<std::size_t>(params.top_logprobs, 1, kMaxTopK);
    Completion c;
    c.steps.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const std::string chosen = seq.normalized_surface(i);
      c.text += chosen;
      const double eps =
          config_.min_epsilon + (config_.max_epsilon - config_.min_epsilon) * rng.uniform();
      TeacherStep step;
      step.chosen_surface = chosen;
      step.top_k.emplace_back(chosen, 1.0 - eps);
      const auto others = distractors(chosen, k - 1, rng);
      // Decreasing shares 4:3:2:1 (renormalized to however many are used).
      double weight_sum = 0.0;
      for (std::size_t d = 0; d < others.size(); ++d) weight_sum += static_cast<double>(kMaxTopK - 1 - d);
      for (std::size_t d = 0; d < others.size(); ++d)
        step.top_k.emplace_back(others[d], eps * (1.0 - config_.tail_share) *
                                               static_cast<double>(kMaxTopK - 1 - d) / weight_sum);
      c.steps.push_back(std::move(step));
    }
    return c;
  }

  std::vector<std::string> distractors(const std::string& chosen, std::size_t count, Rng& rng) const {
    std::vector<std::string> out;
    const bool spaced = !chosen.empty() && chosen[0] == ' ';
    const std::string body = spaced ? chosen.substr(1) : chosen;
    const bool numeric = !body.empty() && std::all_of(body.begin(), body.end(), [](char ch) {
      return ch >= '0' && ch <= '9';
    });
    if (numeric && body.size() < 9) {
      const long n = std::stol(body);
      for (long off : {1L, -1L, 2L, -2L, 10L, 3L, -3L}) {
        if (out.size() == count) break;
        if (n + off < 0) continue;
        out.push_back((spaced ? " " : "") + std::to_string(n + off));
      }
    }
    while (out.size() < count) {
      const std::string& cand = pool_[rng.below(pool_.size())];
      if (cand != chosen && std::find(out.begin(), out.end(), cand) == out.end()) out.push_back(cand);
    }
    return out;
  }

  MockTeacherConfig config_;
  Vocabulary vocab_;
  std::vector<std::string> pool_;
};

}  // namespace cotd
