#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotd/error.hpp"
#include "cotd/token.hpp"
#include "cotd/utf8.hpp"

namespace cotd {

/// Edit distance over code points (unit insert/delete/substitute).
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = utf8::split_chars(a);
  const auto y = utf8::split_chars(b);
  if (x.empty()) return y.size();
  if (y.empty()) return x.size();
  std::vector<std::size_t> row(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t corner = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t upper = row[j];
      const std::size_t sub = corner + (x[i - 1] == y[j - 1] ? 0 : 1);
      row[j] = std::min({upper + 1, row[j - 1] + 1, sub});
      corner = upper;
    }
  }
  return row[y.size()];
}

template <class F>
concept TokenCost = requires(const F& f, std::string_view a, std::string_view b) {
  { f(a, b) } -> std::convertible_to<double>;
};

/// Levenshtein(a, b) / max(|a|, |b|) in code points; 0 when both are empty.
struct NormalizedLevenshtein {
  double operator()(std::string_view a, std::string_view b) const {
    const std::size_t longest = std::max(utf8::length(a), utf8::length(b));
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
  }
};

enum class LinkKind { one_to_one, one_to_many, many_to_one };

inline std::string_view to_string(LinkKind k) noexcept {
  switch (k) {
    case LinkKind::one_to_one: return "one_to_one";
    case LinkKind::one_to_many: return "one_to_many";
    case LinkKind::many_to_one: return "many_to_one";
  }
  return "?";
}

/// Cumulative cost table f(i, j), row-major, 1-based accessors.
class AlignmentMatrix {
public:
  AlignmentMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), cells_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& at(std::size_t i, std::size_t j) { return cells_[(i - 1) * cols_ + (j - 1)]; }
  double at(std::size_t i, std::size_t j) const { return cells_[(i - 1) * cols_ + (j - 1)]; }

private:
  std::size_t rows_, cols_;
  std::vector<double> cells_;
};

/// One cell on the backtrace path. Indices are 1-based.
struct AlignmentPair {
  std::size_t teacher_index = 0;
  std::size_t student_index = 0;
  double pair_cost = 0.0;

  bool operator==(const AlignmentPair&) const = default;
};

struct AlignmentResult {
  std::vector<AlignmentPair> pairs;
  double total_cost = 0.0;
  std::size_t teacher_length = 0;
  std::size_t student_length = 0;
  std::vector<LinkKind> student_link_kind;
};

/// Per-student-token link kinds. Student j is one_to_one when it occurs in a
/// single pair whose teacher token also occurs in a single pair; it is
/// many_to_one when it pairs with several teacher tokens, and one_to_many when
/// its only teacher token also covers other student tokens.
inline std::vector<LinkKind> classify_links(const std::vector<AlignmentPair>& pairs,
                                            std::size_t teacher_length,
                                            std::size_t student_length) {
  std::vector<std::size_t> per_teacher(teacher_length + 1, 0);
  std::vector<std::size_t> per_student(student_length + 1, 0);
  std::vector<std::size_t> teacher_of(student_length + 1, 0);
  for (const auto& p : pairs) {
    ++per_teacher.at(p.teacher_index);
    ++per_student.at(p.student_index);
    teacher_of[p.student_index] = p.teacher_index;
  }
  std::vector<LinkKind> kinds(student_length, LinkKind::one_to_one);
  for (std::size_t j = 1; j <= student_length; ++j) {
    if (per_student[j] > 1) kinds[j - 1] = LinkKind::many_to_one;
    else if (per_teacher[teacher_of[j]] > 1) kinds[j - 1] = LinkKind::one_to_many;
  }
  return kinds;
}

inline std::vector<LinkKind> classify_links(const AlignmentResult& r) {
  return classify_links(r.pairs, r.teacher_length, r.student_length);
}

/// 1-based teacher index aligned to student token `student_index` (1-based)
/// when that link is one_to_one.
inline std::optional<std::size_t> one_to_one_teacher(const AlignmentResult& r,
                                                     std::size_t student_index) {
  if (r.student_link_kind.at(student_index - 1) != LinkKind::one_to_one) return std::nullopt;
  for (const auto& p : r.pairs)
    if (p.student_index == student_index) return p.teacher_index;
  return std::nullopt;
}

/// Fills f(i, j) over normalized surfaces. Every move, including the
/// vertical and horizontal ones, charges the cost of the cell it lands on:
///   f(1,1) = c11
///   f(i,1) = f(i-1,1) + ci1,  f(1,j) = f(1,j-1) + c1j
///   f(i,j) = min(f(i-1,j), f(i,j-1), f(i-1,j-1)) + cij
template <TokenCost Cost>
AlignmentMatrix fill_alignment_matrix(const std::vector<std::string>& teacher,
                                      const std::vector<std::string>& student,
                                      const Cost& cost, AlignmentMatrix* pair_costs = nullptr) {
  const std::size_t L = teacher.size(), N = student.size();
  AlignmentMatrix f(L, N);
  AlignmentMatrix c(L, N);
  for (std::size_t i = 1; i <= L; ++i)
    for (std::size_t j = 1; j <= N; ++j)
      c.at(i, j) = static_cast<double>(cost(teacher[i - 1], student[j - 1]));
  for (std::size_t i = 1; i <= L; ++i) {
    for (std::size_t j = 1; j <= N; ++j) {
      double best;
      if (i == 1 && j == 1) best = 0.0;
      else if (i == 1) best = f.at(1, j - 1);
      else if (j == 1) best = f.at(i - 1, 1);
      else best = std::min({f.at(i - 1, j), f.at(i, j - 1), f.at(i - 1, j - 1)});
      f.at(i, j) = best + c.at(i, j);
    }
  }
  if (pair_costs) *pair_costs = std::move(c);
  return f;
}

/// Minimal-cost monotone many-to-many alignment of a teacher and a student
/// tokenization of the same text. Ties in the backtrace prefer the diagonal,
/// then the vertical (teacher) step, then the horizontal (student) step.
template <TokenCost Cost = NormalizedLevenshtein>
AlignmentResult align(const TokenSequence& teacher, const TokenSequence& student,
                      const Cost& cost = {}) {
  if (teacher.empty() || student.empty()) throw EmptySequence();
  std::vector<std::string> s, t;
  s.reserve(teacher.size());
  t.reserve(student.size());
  for (std::size_t i = 0; i < teacher.size(); ++i) s.push_back(teacher.normalized_surface(i));
  for (std::size_t j = 0; j < student.size(); ++j) t.push_back(student.normalized_surface(j));
  {
    std::string a, b;
    for (const auto& x : s) a += x;
    for (const auto& x : t) b += x;
    if (a != b) throw TextMismatch(std::move(a), std::move(b));
  }

  const std::size_t L = s.size(), N = t.size();
  AlignmentMatrix c(L, N);
  const AlignmentMatrix f = fill_alignment_matrix(s, t, cost, &c);

  AlignmentResult r;
  r.teacher_length = L;
  r.student_length = N;
  r.total_cost = f.at(L, N);
  std::size_t i = L, j = N;
  for (;;) {
    r.pairs.push_back({i, j, c.at(i, j)});
    if (i == 1 && j == 1) break;
    if (i == 1) {
      --j;
    } else if (j == 1) {
      --i;
    } else {
      const double diag = f.at(i - 1, j - 1), up = f.at(i - 1, j), left = f.at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
  }
  std::reverse(r.pairs.begin(), r.pairs.end());
  r.student_link_kind = classify_links(r);
  return r;
}

}  // namespace cotd
