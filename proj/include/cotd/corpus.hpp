#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cotd/answer.hpp"
#include "cotd/corpus_types.hpp"
#include "cotd/error.hpp"
#include "cotd/rng.hpp"
#include "cotd/teacher.hpp"

namespace cotd {

inline constexpr std::string_view kTemplateVersion = "v1";
inline constexpr std::size_t kDefaultSamples = 40;
inline constexpr std::size_t kDefaultExemplars = 4;
inline constexpr std::size_t kDefaultDevSize = 500;

/// Teacher prompt (template v1): two fixed worked problems, then the target.
inline std::string render_teacher_prompt(const Question& q) {
  return "Solve each problem step by step, then give the final answer.\n\n"
         "Question: Ben has 4 cards. He buys 3 more cards. How many cards does Ben have now?\n"
         "Answer: Ben starts with 4 cards. After buying 3 more, he has 4 + 3 = 7 cards. The answer is 7\n\n"
         "Question: Mia has 9 books. She gives away 2 books. She gets 2 times as many books. "
         "How many books does Mia have now?\n"
         "Answer: Mia starts with 9 books. After giving away 2, she has 9 - 2 = 7 books. "
         "After getting 2 times as many, she has 7 * 2 = 14 books. The answer is 14\n\n"
         "Question: " + q.text + "\nAnswer:";
}

/// Draws `n` solutions for one question, scoring each against the gold answer.
inline std::vector<Solution> sample_solutions(const Question& q, TeacherClient& client,
                                              std::size_t n = kDefaultSamples,
                                              const DecodeParams& params = {}) {
  if (n == 0) throw ValidationError("sample count must be at least 1");
  CompletionRequest req{render_teacher_prompt(q), n, 0, params};
  auto completions = client.complete(req);
  if (completions.size() != n)
    throw EndpointError(0, completions.size(), "teacher returned " + std::to_string(completions.size()) +
                                                   " of " + std::to_string(n) + " completions");
  std::vector<Solution> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(make_solution(q, k, completions[k]));
  return out;
}

inline void sort_solutions(std::vector<Solution>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Solution& a, const Solution& b) {
    return std::tie(a.question_id, a.sample_index) < std::tie(b.question_id, b.sample_index);
  });
}

/// Samples every question with at most `max_in_flight` concurrent requests.
/// Output is sorted by (question_id, sample_index). On failure the solutions
/// gathered so far land in `partial` and the first error is rethrown.
inline std::vector<Solution> sample_corpus(const std::vector<Question>& questions, TeacherClient& client,
                                           std::size_t n = kDefaultSamples, const DecodeParams& params = {},
                                           std::size_t max_in_flight = 4,
                                           std::vector<Solution>* partial = nullptr) {
  std::vector<Solution> all;
  std::mutex mu;
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= questions.size()) return;
      try {
        auto got = sample_solutions(questions[i], client, n, params);
        std::lock_guard lock(mu);
        for (auto& s : got) all.push_back(std::move(s));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_in_flight, questions.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  sort_solutions(all);
  if (failure) {
    if (partial) *partial = std::move(all);
    std::rethrow_exception(failure);
  }
  return all;
}

/// Keeps correct solutions in order. With `dedup`, repeats of an identical
/// (question, reasoning, answer) triple after the first are dropped too.
inline std::vector<Solution> filter_correct(const std::vector<Solution>& solutions, bool dedup = false) {
  std::vector<Solution> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& s : solutions) {
    if (!s.correct) continue;
    if (dedup && !seen.emplace(s.question_id, s.cot_text, s.extracted_answer.value_or("")).second) continue;
    out.push_back(s);
  }
  return out;
}

/// Question ids that contributed no kept solution.
inline std::vector<std::string> questions_without_data(const std::vector<Question>& questions,
                                                       const std::vector<Solution>& kept) {
  std::set<std::string> have;
  for (const auto& s : kept) have.insert(s.question_id);
  std::vector<std::string> out;
  for (const auto& q : questions)
    if (!have.contains(q.id)) out.push_back(q.id);
  return out;
}

using Exemplar = std::pair<Question, Solution>;

/// The `k` lexically smallest question ids other than `target_id`, each with
/// its lowest-index correct solution.
inline std::vector<Exemplar> select_exemplars(const std::vector<Question>& questions,
                                              const std::vector<Solution>& kept, const std::string& target_id,
                                              std::size_t k = kDefaultExemplars) {
  std::map<std::string, const Solution*> first;
  for (const auto& s : kept) {
    if (!s.correct || s.question_id == target_id) continue;
    auto [it, inserted] = first.emplace(s.question_id, &s);
    if (!inserted && s.sample_index < it->second->sample_index) it->second = &s;
  }
  std::map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id.emplace(q.id, &q);
  std::vector<Exemplar> out;
  for (const auto& [id, sol] : first) {
    if (out.size() == k) break;
    auto q = by_id.find(id);
    if (q != by_id.end()) out.emplace_back(*q->second, *sol);
  }
  return out;
}

namespace detail {

inline std::string answer_of(const Solution& s) { return s.extracted_answer.value_or(""); }

inline std::string cot_output(const Solution& s) {
  return s.cot_text + " The answer is " + answer_of(s);
}

}  // namespace detail

/// Renders one tuning instance (template v1). In-context formats prepend `k`
/// "Question:/Answer:" blocks; B2 exemplars carry reasoning, B1 exemplars
/// only the answer.
inline FormattedInstance format_instance(const Question& q, const Solution& s, FormatTag tag,
                                         const std::vector<Exemplar>& exemplars = {},
                                         std::size_t k = kDefaultExemplars) {
  FormattedInstance f;
  f.format_tag = tag;
  f.question_id = q.id;
  f.output_text = has_cot(tag) ? detail::cot_output(s) : detail::answer_of(s);
  if (!is_in_context(tag)) {
    f.input_text = q.text;
    return f;
  }
  std::vector<const Exemplar*> usable;
  for (const auto& e : exemplars)
    if (e.first.id != q.id) usable.push_back(&e);
  if (usable.size() < k) throw InsufficientExemplars(k, usable.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& [eq, es] = *usable[i];
    f.input_text += "Question: " + eq.text + "\nAnswer: " +
                    (tag == FormatTag::B2_incontext_cot ? detail::cot_output(es) : detail::answer_of(es)) +
                    "\n\n";
  }
  f.input_text += "Question: " + q.text + "\nAnswer:";
  return f;
}

/// Empty when `f` satisfies its format's structural rules, else the reason.
inline std::string format_violation(const FormattedInstance& f, std::size_t k = kDefaultExemplars) {
  std::size_t blocks = 0;
  for (std::size_t at = f.input_text.find("Question: "); at != std::string::npos;
       at = f.input_text.find("Question: ", at + 1))
    ++blocks;
  if (is_in_context(f.format_tag)) {
    if (blocks != k + 1) return "expected " + std::to_string(k) + " exemplars, found " +
                                std::to_string(blocks == 0 ? 0 : blocks - 1);
    if (!f.input_text.ends_with("\nAnswer:")) return "input does not end with the answer cue";
  } else if (blocks != 0) {
    return "zero-shot input carries exemplars";
  }
  if (has_cot(f.format_tag)) {
    const auto at = f.output_text.rfind(" The answer is ");
    if (at == std::string::npos || at == 0) return "output lacks reasoning followed by the answer";
    if (!normalize_answer(f.output_text.substr(at))) return "output lacks a final number";
  } else {
    auto n = normalize_answer(f.output_text);
    if (!n || *n != f.output_text) return "answer-only output is not a bare number";
  }
  return {};
}

/// Deterministic weighted interleaving. Each format list is shuffled with its
/// own sub-seed, then formats are drawn by smooth weighted round robin, so
/// every window of sum(weights) draws holds each format weight-many times
/// (to within one) until a list runs out.
inline std::vector<FormattedInstance> mix_formats(std::map<FormatTag, std::vector<FormattedInstance>> by_format,
                                                  const std::map<FormatTag, double>& ratio, std::uint64_t seed) {
  double total_weight = 0.0;
  for (const auto& [tag, w] : ratio) {
    if (!(w >= 0.0)) throw ValidationError("format weights must be non-negative");
    total_weight += w;
  }
  if (!(total_weight > 0.0)) throw ValidationError("format weights are all zero");

  struct Lane {
    FormatTag tag;
    double weight;
    double current = 0.0;
    std::vector<FormattedInstance> items;
    std::size_t next = 0;
  };
  std::vector<Lane> lanes;
  for (auto tag : kAllFormats) {
    auto w = ratio.find(tag);
    auto items = by_format.find(tag);
    if (w == ratio.end() || w->second <= 0.0 || items == by_format.end() || items->second.empty()) continue;
    Rng rng(derive_seed(seed, std::string("mix/") + std::string(short_name(tag))));
    rng.shuffle(items->second);
    lanes.push_back({tag, w->second, 0.0, std::move(items->second)});
  }

  std::vector<FormattedInstance> out;
  for (;;) {
    double active = 0.0;
    Lane* best = nullptr;
    for (auto& lane : lanes) {
      if (lane.next == lane.items.size()) continue;
      lane.current += lane.weight;
      active += lane.weight;
      if (!best || lane.current > best->current) best = &lane;
    }
    if (!best) break;
    best->current -= active;
    out.push_back(std::move(best->items[best->next++]));
  }
  return out;
}

/// Seeded split into (dev, test); both keep the input order.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_dev(const std::vector<T>& items,
                                                    std::size_t dev_size = kDefaultDevSize,
                                                    std::uint64_t seed = 0) {
  if (items.size() <= dev_size) throw TooSmall(items.size(), dev_size);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  std::vector<bool> in_dev(items.size(), false);
  for (std::size_t i = 0; i < dev_size; ++i) in_dev[order[i]] = true;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); ++i) (in_dev[i] ? out.first : out.second).push_back(items[i]);
  return out;
}

/// Same, but `dev_size` counts groups (e.g. question ids) and a group never
/// straddles the two sides.
template <class T, class KeyFn>
std::pair<std::vector<T>, std::vector<T>> split_dev_grouped(const std::vector<T>& items, KeyFn key,
                                                            std::size_t dev_size, std::uint64_t seed) {
  std::vector<std::string> keys;
  {
    std::set<std::string> uniq;
    for (const auto& it : items) uniq.insert(key(it));
    keys.assign(uniq.begin(), uniq.end());
  }
  auto [dev_keys, test_keys] = split_dev(keys, dev_size, seed);
  std::set<std::string> dev(dev_keys.begin(), dev_keys.end());
  std::pair<std::vector<T>, std::vector<T>> out;
  for (const auto& it : items) (dev.contains(key(it)) ? out.first : out.second).push_back(it);
  return out;
}

}  // namespace cotd
