#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotd/error.hpp"
#include "cotd/utf8.hpp"

namespace cotd {

using TokenId = std::int32_t;

/// Replaces a leading word-boundary marker ("Ġ", "▁", ...) by one space.
/// Every other byte is left alone.
inline std::string normalize_surface(std::string_view surface,
                                     const std::optional<std::string>& marker) {
  if (marker && !marker->empty() && surface.starts_with(*marker)) {
    std::string out(" ");
    out.append(surface.substr(marker->size()));
    return out;
  }
  return std::string(surface);
}

/// Ordered id -> surface table. Ids are the positions in the table, so they
/// are contiguous from 0 by construction.
class Vocabulary {
public:
  Vocabulary() = default;

  Vocabulary(std::string name, std::vector<std::string> surfaces,
             std::optional<std::string> marker = std::nullopt)
      : name_(std::move(name)), marker_(std::move(marker)) {
    if (marker_ && marker_->empty()) marker_.reset();
    surfaces_.reserve(surfaces.size());
    for (auto& s : surfaces) append(std::move(s));
  }

  const std::string& name() const noexcept { return name_; }
  const std::optional<std::string>& marker() const noexcept { return marker_; }
  std::size_t size() const noexcept { return surfaces_.size(); }
  std::size_t max_surface_bytes() const noexcept { return max_bytes_; }

  const std::string& surface(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size())
      throw OutOfVocab(id, surfaces_.size());
    return surfaces_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> find(std::string_view surface) const {
    auto it = by_surface_.find(std::string(surface));
    if (it == by_surface_.end()) return std::nullopt;
    return it->second;
  }

  /// Lookup by normalized surface (real leading space instead of the marker).
  /// When two entries normalize identically the lower id wins.
  std::optional<TokenId> find_normalized(std::string_view normalized) const {
    auto it = by_normalized_.find(std::string(normalized));
    if (it == by_normalized_.end()) return std::nullopt;
    return it->second;
  }

  /// Appends a tail entry (character fallback) and returns its id.
  TokenId append(std::string surface) {
    if (surface.empty()) throw InvalidVocabulary("empty surface at id " + std::to_string(size()));
    if (marker_) {
      if (surface.find(*marker_, 1) != std::string::npos)
        throw InvalidVocabulary("marker inside surface '" + surface +
                                "'; markers may only appear as a prefix");
    }
    if (by_surface_.contains(surface))
      throw InvalidVocabulary("duplicate surface '" + surface + "'");
    const auto id = static_cast<TokenId>(surfaces_.size());
    by_surface_.emplace(surface, id);
    by_normalized_.try_emplace(normalize_surface(surface, marker_), id);
    max_bytes_ = std::max(max_bytes_, surface.size());
    surfaces_.push_back(std::move(surface));
    return id;
  }

  /// Text format: optional `#marker=<string>` header, then `<id>\t<surface>`
  /// lines. Surfaces may escape `\t`, `\n` and `\\`.
  static Vocabulary parse(std::istream& in, std::string name) {
    std::optional<std::string> marker;
    std::vector<std::pair<long, std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line.starts_with("#marker=")) {
        marker = line.substr(8);
        continue;
      }
      if (line.front() == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw InvalidVocabulary("line " + std::to_string(lineno) + ": expected <id>\\t<surface>");
      long id = 0;
      try {
        std::size_t used = 0;
        id = std::stol(line.substr(0, tab), &used);
        if (used != tab) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InvalidVocabulary("line " + std::to_string(lineno) + ": bad id");
      }
      rows.emplace_back(id, unescape(std::string_view(line).substr(tab + 1)));
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> surfaces;
    surfaces.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].first != static_cast<long>(i))
        throw InvalidVocabulary("ids must be unique and contiguous from 0 (missing or repeated id " +
                                std::to_string(i) + ")");
      surfaces.push_back(std::move(rows[i].second));
    }
    return Vocabulary(std::move(name), std::move(surfaces), std::move(marker));
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path);
    auto slash = path.find_last_of('/');
    std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    if (auto dot = stem.rfind('.'); dot != std::string::npos && dot > 0) stem.resize(dot);
    return parse(in, stem);
  }

  void write(std::ostream& out) const {
    if (marker_) out << "#marker=" << *marker_ << '\n';
    for (std::size_t i = 0; i < surfaces_.size(); ++i)
      out << i << '\t' << escape(surfaces_[i]) << '\n';
  }

private:
  static std::string unescape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '\\' && i + 1 < s.size()) {
        char n = s[i + 1];
        if (n == 't' || n == 'n' || n == '\\') {
          out.push_back(n == 't' ? '\t' : n == 'n' ? '\n' : '\\');
          ++i;
          continue;
        }
      }
      out.push_back(s[i]);
    }
    return out;
  }

  static std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
      if (c == '\t') out += "\\t";
      else if (c == '\n') out += "\\n";
      else if (c == '\\') out += "\\\\";
      else out.push_back(c);
    }
    return out;
  }

  std::string name_;
  std::optional<std::string> marker_;
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> by_surface_;
  std::unordered_map<std::string, TokenId> by_normalized_;
  std::size_t max_bytes_ = 0;
};

struct Token {
  std::string surface;
  TokenId id = 0;

  bool operator==(const Token&) const = default;
};

struct TokenSequence {
  std::vector<Token> tokens;
  std::string tokenizer_id;
  std::optional<std::string> marker;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  const Token& operator[](std::size_t i) const { return tokens[i]; }

  std::vector<TokenId> ids() const {
    std::vector<TokenId> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.id);
    return out;
  }

  std::string normalized_surface(std::size_t i) const {
    return normalize_surface(tokens[i].surface, marker);
  }

  /// Concatenation of normalized surfaces.
  std::string normalized_text() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) out += normalized_surface(i);
    return out;
  }
};

namespace detail {

// Text with every space replaced by the marker, plus the source byte offset of
// each output byte (for error positions).
inline std::pair<std::string, std::vector<std::size_t>> to_marked(
    std::string_view text, const std::optional<std::string>& marker) {
  std::string out;
  std::vector<std::size_t> origin;
  out.reserve(text.size());
  origin.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (marker && text[i] == ' ') {
      out += *marker;
      origin.insert(origin.end(), marker->size(), i);
    } else {
      out.push_back(text[i]);
      origin.push_back(i);
    }
  }
  return {std::move(out), std::move(origin)};
}

template <class OnMiss>
TokenSequence greedy_encode(std::string_view text, const Vocabulary& vocab,
                            OnMiss&& on_miss) {
  TokenSequence seq{{}, vocab.name(), vocab.marker()};
  auto [marked, origin] = to_marked(text, vocab.marker());
  std::string_view rest(marked);
  std::size_t pos = 0;
  while (pos < rest.size()) {
    const std::size_t longest = std::min(vocab.max_surface_bytes(), rest.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len > 0; --len) {
      if (auto id = vocab.find(rest.substr(pos, len))) {
        seq.tokens.push_back({std::string(rest.substr(pos, len)), *id});
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      const std::size_t clen = utf8::char_length_at(rest, pos);
      auto piece = rest.substr(pos, clen);
      TokenId id = on_miss(piece, origin[pos]);
      seq.tokens.push_back({std::string(piece), id});
      pos += clen;
    }
  }
  return seq;
}

}  // namespace detail

/// Greedy longest-match segmentation. Throws UncoverableCharacter when some
/// character has no vocabulary entry.
inline TokenSequence encode(std::string_view text, const Vocabulary& vocab) {
  return detail::greedy_encode(text, vocab, [](std::string_view, std::size_t at) -> TokenId {
    throw UncoverableCharacter(at);
  });
}

/// Character-fallback mode: unseen characters are appended to `vocab` as tail
/// entries and encoded as single-character tokens.
inline TokenSequence encode_with_fallback(std::string_view text, Vocabulary& vocab) {
  return detail::greedy_encode(text, vocab, [&vocab](std::string_view piece, std::size_t) {
    return vocab.append(std::string(piece));
  });
}

/// Concatenated surfaces with every marker rendered back as a space.
inline std::string decode(const TokenSequence& seq) {
  std::string out;
  for (const auto& t : seq.tokens) out += t.surface;
  if (seq.marker && !seq.marker->empty()) {
    const std::string& m = *seq.marker;
    std::string replaced;
    replaced.reserve(out.size());
    for (std::size_t i = 0; i < out.size();) {
      if (out.compare(i, m.size(), m) == 0) {
        replaced.push_back(' ');
        i += m.size();
      } else {
        replaced.push_back(out[i++]);
      }
    }
    return replaced;
  }
  return out;
}

/// Builds a sequence from surfaces that are already normalized (real leading
/// spaces), resolving each against `vocab`. Used for teacher completions,
/// whose per-step tokens arrive as plain text.
inline std::optional<TokenSequence> resolve_normalized(
    const std::vector<std::string>& normalized_surfaces, const Vocabulary& vocab) {
  TokenSequence seq{{}, vocab.name(), vocab.marker()};
  seq.tokens.reserve(normalized_surfaces.size());
  for (const auto& s : normalized_surfaces) {
    auto id = vocab.find_normalized(s);
    if (!id) return std::nullopt;
    seq.tokens.push_back({vocab.surface(*id), *id});
  }
  return seq;
}

}  // namespace cotd
