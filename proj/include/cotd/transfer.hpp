#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cotd/align.hpp"
#include "cotd/error.hpp"
#include "cotd/jsonl.hpp"
#include "cotd/token.hpp"

namespace cotd {

inline constexpr std::size_t kMaxTopK = 5;
inline constexpr double kMassSlack = 1e-6;

/// One decoding step of the teacher: the token it emitted plus the (at most
/// five) most probable alternatives. Surfaces are plain text with real
/// spaces, as completion endpoints return them.
struct TeacherStep {
  std::string chosen_surface;
  std::vector<std::pair<std::string, double>> top_k;

  std::optional<double> probability_of(std::string_view surface) const {
    for (const auto& [s, p] : top_k)
      if (s == surface) return p;
    return std::nullopt;
  }

  /// Empty when the step is usable; otherwise the reason it is not.
  std::string defect() const {
    if (top_k.empty()) return "empty top_k";
    if (top_k.size() > kMaxTopK) return "more than 5 alternatives";
    double sum = 0.0;
    for (std::size_t a = 0; a < top_k.size(); ++a) {
      const double p = top_k[a].second;
      if (!(p > 0.0 && p <= 1.0)) return "probability outside (0, 1]";
      sum += p;
      for (std::size_t b = 0; b < a; ++b)
        if (top_k[a].first == top_k[b].first) return "duplicate surface";
    }
    if (sum > 1.0 + kMassSlack) return "probabilities sum above 1";
    if (!probability_of(chosen_surface)) return "chosen token outside top_k";
    return {};
  }

  bool degenerate() const { return !defect().empty(); }

  bool operator==(const TeacherStep&) const = default;
};

enum class TargetKind { transferred, one_hot };

inline std::string_view to_string(TargetKind k) noexcept {
  return k == TargetKind::transferred ? "transferred" : "one_hot";
}

/// Target distribution for one student position. Ids outside `entries()`
/// carry probability exactly 0; the mass may be below 1.
class StudentTarget {
public:
  static StudentTarget one_hot(TokenId gold) {
    if (gold < 0) throw InvariantViolation("one_hot target on a negative id");
    StudentTarget t;
    t.kind_ = TargetKind::one_hot;
    t.entries_.emplace(gold, 1.0);
    return t;
  }

  static StudentTarget transferred(std::map<TokenId, double> entries, TokenId gold,
                                   bool gold_forced = false) {
    if (!entries.contains(gold))
      throw InvariantViolation("transferred target lacks the gold token " + std::to_string(gold));
    double mass = 0.0;
    for (const auto& [id, p] : entries) {
      if (!(p > 0.0 && p <= 1.0) || id < 0)
        throw InvariantViolation("transferred target has an invalid entry");
      mass += p;
    }
    if (mass > 1.0 + kMassSlack) throw InvariantViolation("transferred target mass above 1");
    StudentTarget t;
    t.kind_ = TargetKind::transferred;
    t.entries_ = std::move(entries);
    t.gold_forced_ = gold_forced;
    return t;
  }

  TargetKind kind() const noexcept { return kind_; }
  const std::map<TokenId, double>& entries() const noexcept { return entries_; }
  bool gold_forced() const noexcept { return gold_forced_; }

  double probability(TokenId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? 0.0 : it->second;
  }

  double mass() const {
    double m = 0.0;
    for (const auto& [id, p] : entries_) m += p;
    return m;
  }

  bool operator==(const StudentTarget&) const = default;

private:
  StudentTarget() = default;
  TargetKind kind_ = TargetKind::one_hot;
  std::map<TokenId, double> entries_;
  bool gold_forced_ = false;
};

struct TargetSequence {
  std::string question_id;
  std::optional<std::size_t> sample_index;
  std::vector<TokenId> student_ids;
  std::vector<StudentTarget> targets;

  bool operator==(const TargetSequence&) const = default;
};

struct TransferOptions {
  /// Rescale kept probabilities to sum to 1. Off by default: truncated mass
  /// is treated as zero.
  bool renormalize = false;
};

struct TransferTally {
  std::size_t transferred = 0;
  std::size_t one_hot = 0;
  std::size_t gold_forced = 0;
  std::size_t gold_unmappable = 0;
  std::size_t dropped_surfaces = 0;
};

/// Student targets from teacher top-5 records: one_to_one links reuse the
/// teacher distribution (mapped into the student vocabulary by normalized
/// surface, unrenormalized); every other link gets a one-hot target on the
/// gold student token.
inline TargetSequence build_targets(const AlignmentResult& alignment,
                                    const std::vector<TeacherStep>& teacher_steps,
                                    const TokenSequence& student, const Vocabulary& student_vocab,
                                    const TransferOptions& options = {},
                                    TransferTally* tally = nullptr) {
  if (teacher_steps.size() != alignment.teacher_length)
    throw LengthMismatch("teacher steps vs aligned teacher sequence", alignment.teacher_length,
                         teacher_steps.size());
  if (student.size() != alignment.student_length)
    throw LengthMismatch("student sequence vs alignment", alignment.student_length, student.size());

  TransferTally local;
  TransferTally& t = tally ? *tally : local;
  TargetSequence out;
  out.student_ids = student.ids();
  out.targets.reserve(student.size());
  std::vector<std::size_t> teacher_of(student.size() + 1, 0);
  for (const auto& p : alignment.pairs) teacher_of.at(p.student_index) = p.teacher_index;

  for (std::size_t j = 1; j <= student.size(); ++j) {
    const TokenId gold = student[j - 1].id;
    if (alignment.student_link_kind.at(j - 1) != LinkKind::one_to_one) {
      out.targets.push_back(StudentTarget::one_hot(gold));
      ++t.one_hot;
      continue;
    }
    const TeacherStep& step = teacher_steps[teacher_of[j] - 1];
    if (step.degenerate()) {
      out.targets.push_back(StudentTarget::one_hot(gold));
      ++t.one_hot;
      ++t.gold_unmappable;
      continue;
    }

    std::map<TokenId, double> entries;
    for (const auto& [surface, p] : step.top_k) {
      if (auto id = student_vocab.find_normalized(surface)) entries.emplace(*id, p);
      else ++t.dropped_surfaces;
    }
    bool forced = false;
    if (!entries.contains(gold)) {
      // The emitted token's probability moves onto the gold student token.
      const double chosen_p = *step.probability_of(step.chosen_surface);
      if (auto chosen_id = student_vocab.find_normalized(step.chosen_surface))
        entries.erase(*chosen_id);
      entries[gold] = chosen_p;
      forced = true;
      ++t.gold_forced;
    }
    if (options.renormalize) {
      double mass = 0.0;
      for (const auto& [id, p] : entries) mass += p;
      for (auto& [id, p] : entries) p /= mass;
    }
    out.targets.push_back(StudentTarget::transferred(std::move(entries), gold, forced));
    ++t.transferred;
  }
  return out;
}

struct TargetAudit {
  std::size_t transferred = 0;
  std::size_t one_hot = 0;
  double mean_mass = 0.0;
  std::size_t gold_forced = 0;

  bool operator==(const TargetAudit&) const = default;
};

inline TargetAudit audit_targets(const TargetSequence& seq) {
  TargetAudit a;
  double mass = 0.0;
  for (const auto& target : seq.targets) {
    (target.kind() == TargetKind::transferred ? a.transferred : a.one_hot) += 1;
    if (target.gold_forced()) ++a.gold_forced;
    mass += target.mass();
  }
  if (!seq.targets.empty()) a.mean_mass = mass / static_cast<double>(seq.targets.size());
  return a;
}

/// `{question_id, sample_index?, student_ids, targets: [{kind, entries, forced?}]}`
inline std::string to_jsonl(const TargetSequence& seq) {
  std::string s = "{\"question_id\":" + jsonl::quote(seq.question_id);
  if (seq.sample_index) s += ",\"sample_index\":" + std::to_string(*seq.sample_index);
  s += ",\"student_ids\":[";
  for (std::size_t i = 0; i < seq.student_ids.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(seq.student_ids[i]);
  }
  s += "],\"targets\":[";
  for (std::size_t i = 0; i < seq.targets.size(); ++i) {
    const auto& t = seq.targets[i];
    if (i) s += ',';
    s += "{\"kind\":\"";
    s += to_string(t.kind());
    s += "\",\"entries\":{";
    bool first = true;
    for (const auto& [id, p] : t.entries()) {
      if (!first) s += ',';
      first = false;
      s += '"' + std::to_string(id) + "\":" + jsonl::format_probability(p);
    }
    s += '}';
    if (t.gold_forced()) s += ",\"forced\":true";
    s += '}';
  }
  s += "]}";
  return s;
}

inline TargetSequence target_sequence_from_json(const nlohmann::json& j) {
  TargetSequence seq;
  seq.question_id = j.at("question_id").get<std::string>();
  if (j.contains("sample_index")) seq.sample_index = j.at("sample_index").get<std::size_t>();
  seq.student_ids = j.at("student_ids").get<std::vector<TokenId>>();
  const auto& targets = j.at("targets");
  if (targets.size() != seq.student_ids.size())
    throw LengthMismatch("targets vs student_ids", seq.student_ids.size(), targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    std::map<TokenId, double> entries;
    for (const auto& [key, value] : t.at("entries").items())
      entries.emplace(static_cast<TokenId>(std::stol(key)), value.get<double>());
    const TokenId gold = seq.student_ids[i];
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "one_hot") {
      if (entries.size() != 1 || !entries.contains(gold) || entries.at(gold) != 1.0)
        throw InvariantViolation("one_hot target must put probability 1 on the gold token");
      seq.targets.push_back(StudentTarget::one_hot(gold));
    } else if (kind == "transferred") {
      seq.targets.push_back(
          StudentTarget::transferred(std::move(entries), gold, t.value("forced", false)));
    } else {
      throw ValidationError("unknown target kind '" + kind + "'");
    }
  }
  return seq;
}

}  // namespace cotd
