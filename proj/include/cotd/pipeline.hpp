#pragma once

// File-to-file pipeline stages shared by the command-line tool and the tests.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cotd/align.hpp"
#include "cotd/corpus.hpp"
#include "cotd/demo_vocab.hpp"
#include "cotd/jsonl.hpp"
#include "cotd/teacher.hpp"
#include "cotd/token.hpp"
#include "cotd/transfer.hpp"

namespace cotd::pipeline {

/// "demo:teacher" / "demo:student" name the built-in vocabularies; anything
/// else is a vocabulary file.
inline Vocabulary load_vocabulary(const std::string& spec) {
  if (spec == "demo:teacher") return demo::teacher_vocabulary();
  if (spec == "demo:student") return demo::student_vocabulary();
  return Vocabulary::load(spec);
}

inline std::vector<Question> read_questions(const std::string& path) {
  std::vector<Question> out;
  std::set<std::string> ids;
  jsonl::for_each_line(path, [&](const nlohmann::json& j, std::size_t lineno) {
    out.push_back(question_from_json(j));
    if (!ids.insert(out.back().id).second)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate question id " + out.back().id);
  });
  return out;
}

inline void write_questions(const std::vector<Question>& qs, const std::string& path) {
  jsonl::Writer w(path);
  for (const auto& q : qs) w.row(to_json(q));
}

inline std::vector<Solution> read_solutions(const std::string& path) {
  std::vector<Solution> out;
  jsonl::for_each_line(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(solution_from_json(j)); });
  return out;
}

inline void write_solutions(const std::vector<Solution>& v, const std::string& path) {
  jsonl::Writer w(path);
  for (const auto& s : v) w.row(to_json(s));
}

struct GenOptions {
  std::size_t samples = kDefaultSamples;
  DecodeParams params;
  std::size_t max_in_flight = 4;
};

/// Samples every question; on failure the solutions gathered so far are still
/// written before the error propagates.
inline std::size_t gen(const std::vector<Question>& questions, TeacherClient& client, const GenOptions& opt,
                       const std::string& out_path) {
  std::vector<Solution> partial;
  std::vector<Solution> all;
  try {
    all = sample_corpus(questions, client, opt.samples, opt.params, opt.max_in_flight, &partial);
  } catch (...) {
    write_solutions(partial, out_path);
    throw;
  }
  write_solutions(all, out_path);
  return all.size();
}

struct FilterReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t questions_seen = 0;
  std::size_t questions_without_data = 0;
};

inline FilterReport filter(const std::string& in_path, const std::string& out_path, bool dedup = false) {
  const auto all = read_solutions(in_path);
  const auto kept = filter_correct(all, dedup);
  write_solutions(kept, out_path);
  std::set<std::string> seen, have;
  for (const auto& s : all) seen.insert(s.question_id);
  for (const auto& s : kept) have.insert(s.question_id);
  return {all.size(), kept.size(), seen.size(), seen.size() - have.size()};
}

/// Teacher and student tokenizations of one solution's completion text.
struct SolutionTokens {
  TokenSequence teacher;
  TokenSequence student;
};

/// The teacher sequence is rebuilt from the recorded step surfaces; the
/// student sequence encodes their concatenation. Empty when the solution has
/// no step record or a step is not a teacher-vocabulary token.
inline std::optional<SolutionTokens> tokenize_solution(const Solution& s, const Vocabulary& teacher_vocab,
                                                       const Vocabulary& student_vocab) {
  if (!s.teacher_steps || s.teacher_steps->empty()) return std::nullopt;
  std::vector<std::string> surfaces;
  std::string text;
  for (const auto& step : *s.teacher_steps) {
    surfaces.push_back(step.chosen_surface);
    text += step.chosen_surface;
  }
  auto teacher = resolve_normalized(surfaces, teacher_vocab);
  if (!teacher) return std::nullopt;
  return SolutionTokens{std::move(*teacher), encode(text, student_vocab)};
}

inline nlohmann::json alignment_to_json(const AlignmentResult& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) pairs.push_back({p.teacher_index, p.student_index, p.pair_cost});
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : r.student_link_kind) kinds.push_back(std::string(to_string(k)));
  return {{"pairs", pairs}, {"total_cost", r.total_cost}, {"link_kinds", kinds}};
}

inline AlignmentResult alignment_from_json(const nlohmann::json& j, std::size_t teacher_length,
                                           std::size_t student_length) {
  AlignmentResult r;
  r.teacher_length = teacher_length;
  r.student_length = student_length;
  r.total_cost = j.at("total_cost").get<double>();
  for (const auto& p : j.at("pairs")) {
    AlignmentPair ap{p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.at(2).get<double>()};
    if (ap.teacher_index < 1 || ap.teacher_index > teacher_length || ap.student_index < 1 ||
        ap.student_index > student_length)
      throw InvariantViolation("alignment pair index out of range");
    r.pairs.push_back(ap);
  }
  r.student_link_kind = classify_links(r);
  return r;
}

struct AlignReport {
  std::size_t aligned = 0;
  std::size_t skipped = 0;
};

/// One line per aligned solution:
/// `{question_id, sample_index, pairs: [[i, j, cost]], total_cost, link_kinds}`.
inline AlignReport align_solutions(const std::string& solutions_path, const Vocabulary& teacher_vocab,
                                   const Vocabulary& student_vocab, const std::string& out_path) {
  AlignReport rep;
  jsonl::Writer w(out_path);
  for (const auto& s : read_solutions(solutions_path)) {
    auto toks = tokenize_solution(s, teacher_vocab, student_vocab);
    if (!toks) {
      ++rep.skipped;
      continue;
    }
    auto j = alignment_to_json(align(toks->teacher, toks->student));
    j["question_id"] = s.question_id;
    j["sample_index"] = s.sample_index;
    w.row(j);
    ++rep.aligned;
  }
  return rep;
}

struct TransferReport {
  std::size_t sequences = 0;
  std::size_t skipped = 0;
  TransferTally tally;
};

/// Builds student targets for every solution with a step record. With
/// `alignments_path`, alignments come from that file (keyed by question id and
/// sample index) instead of being recomputed.
inline TransferReport transfer(const std::string& solutions_path, const Vocabulary& teacher_vocab,
                               const Vocabulary& student_vocab, const TransferOptions& options,
                               const std::string& out_path,
                               const std::optional<std::string>& alignments_path = std::nullopt) {
  std::map<std::pair<std::string, std::size_t>, nlohmann::json> stored;
  if (alignments_path)
    jsonl::for_each_line(*alignments_path, [&](const nlohmann::json& j, std::size_t) {
      stored[{j.at("question_id").get<std::string>(), j.at("sample_index").get<std::size_t>()}] = j;
    });
  TransferReport rep;
  jsonl::Writer w(out_path);
  for (const auto& s : read_solutions(solutions_path)) {
    auto toks = tokenize_solution(s, teacher_vocab, student_vocab);
    if (!toks) {
      ++rep.skipped;
      continue;
    }
    AlignmentResult a;
    if (alignments_path) {
      auto it = stored.find({s.question_id, s.sample_index});
      if (it == stored.end())
        throw ValidationError("no alignment for " + s.question_id + "#" + std::to_string(s.sample_index));
      a = alignment_from_json(it->second, toks->teacher.size(), toks->student.size());
    } else {
      a = align(toks->teacher, toks->student);
    }
    auto seq = build_targets(a, *s.teacher_steps, toks->student, student_vocab, options, &rep.tally);
    seq.question_id = s.question_id;
    seq.sample_index = s.sample_index;
    w.line(to_jsonl(seq));
    ++rep.sequences;
  }
  return rep;
}

struct FormatOptions {
  std::vector<FormatTag> formats{std::begin(kAllFormats), std::end(kAllFormats)};
  std::map<FormatTag, double> ratio;  // empty: weight 1 for each requested format
  std::size_t exemplars = kDefaultExemplars;
  std::uint64_t seed = 0;
};

/// Renders every kept solution in each requested format and interleaves the
/// formats by weight.
inline std::vector<FormattedInstance> format_dataset(const std::vector<Question>& questions,
                                                     const std::vector<Solution>& kept,
                                                     const FormatOptions& opt) {
  std::map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id.emplace(q.id, &q);
  std::map<std::string, std::vector<Exemplar>> exemplar_cache;
  std::map<FormatTag, std::vector<FormattedInstance>> by_format;
  for (const auto& s : kept) {
    if (!s.correct) continue;
    const auto q = by_id.find(s.question_id);
    if (q == by_id.end()) throw ValidationError("solution for unknown question " + s.question_id);
    for (auto tag : opt.formats) {
      const std::vector<Exemplar>* ex = nullptr;
      if (is_in_context(tag)) {
        auto it = exemplar_cache.find(s.question_id);
        if (it == exemplar_cache.end())
          it = exemplar_cache.emplace(s.question_id, select_exemplars(questions, kept, s.question_id, opt.exemplars))
                   .first;
        ex = &it->second;
      }
      by_format[tag].push_back(format_instance(*q->second, s, tag, ex ? *ex : std::vector<Exemplar>{},
                                               opt.exemplars));
    }
  }
  auto ratio = opt.ratio;
  if (ratio.empty())
    for (auto tag : opt.formats) ratio[tag] = 1.0;
  return mix_formats(std::move(by_format), ratio, opt.seed);
}

inline std::size_t format(const std::string& questions_path, const std::string& kept_path,
                          const FormatOptions& opt, const std::string& out_path) {
  const auto out = format_dataset(read_questions(questions_path), read_solutions(kept_path), opt);
  jsonl::Writer w(out_path);
  for (const auto& f : out) w.row(to_json(f));
  return out.size();
}

/// "B2=1,B4=3" → weights.
inline std::map<FormatTag, double> parse_ratio(const std::string& text) {
  std::map<FormatTag, double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("mix entry '" + item + "' is not TAG=WEIGHT");
    double w = 0.0;
    try {
      std::size_t used = 0;
      w = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ValidationError("mix weight in '" + item + "' is not a number");
    }
    out[parse_format_tag(item.substr(0, eq))] = w;
  }
  return out;
}

struct SplitReport {
  std::size_t dev = 0;
  std::size_t test = 0;
};

/// Splits JSONL lines (kept verbatim) into dev and test. With `group_key`,
/// `dev_size` counts distinct values of that field and a group never
/// straddles the split.
inline SplitReport split(const std::string& in_path, std::size_t dev_size, std::uint64_t seed,
                         const std::optional<std::string>& group_key, const std::string& dev_path,
                         const std::string& test_path) {
  const auto lines = jsonl::read_lines(in_path);
  std::pair<std::vector<std::string>, std::vector<std::string>> parts;
  if (group_key) {
    std::map<std::string, std::string> key_of;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(in_path + ": " + e.what());
      }
      if (!j.contains(*group_key)) throw ValidationError(in_path + ": line without field '" + *group_key + "'");
      const auto& v = j.at(*group_key);
      key_of[lines[i]] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    parts = split_dev_grouped(lines, [&](const std::string& l) { return key_of.at(l); }, dev_size, seed);
  } else {
    parts = split_dev(lines, dev_size, seed);
  }
  jsonl::Writer dev(dev_path), test(test_path);
  for (const auto& l : parts.first) dev.line(l);
  for (const auto& l : parts.second) test.line(l);
  return {parts.first.size(), parts.second.size()};
}

}  // namespace cotd::pipeline
