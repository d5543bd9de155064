#include <sstream>

#include <gtest/gtest.h>

#include "cotd/demo_vocab.hpp"
#include "cotd/token.hpp"
#include "oracles.hpp"

using namespace cotd;

namespace {

std::vector<std::string> surfaces(const TokenSequence& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tokens) out.push_back(t.surface);
  return out;
}

Vocabulary food_vocab() { return Vocabulary("food", {"f", "o", "d", "fo", "od", "foo", "food"}); }

}  // namespace

TEST(Encode, LongestMatchTakesWholeWord) {
  EXPECT_EQ(surfaces(encode("food", food_vocab())), std::vector<std::string>{"food"});
}

TEST(Encode, EmptyTextGivesEmptySequence) {
  const auto seq = encode("", food_vocab());
  EXPECT_TRUE(seq.empty());
  EXPECT_EQ(seq.tokenizer_id, "food");
}

TEST(Encode, GreedyPrefixThenRemainder) {
  const Vocabulary v("v", {"f", "o", "d", "fo", "od"});
  EXPECT_EQ(surfaces(encode("fod", v)), (std::vector<std::string>{"fo", "d"}));
}

TEST(Encode, IdsMatchVocabularySurfaces) {
  const auto v = demo::teacher_vocabulary();
  const auto seq = encode("Tom has 12 apples.", v);
  for (const auto& t : seq.tokens) EXPECT_EQ(v.surface(t.id), t.surface);
}

TEST(Encode, UncoverableCharacterReportsBytePosition) {
  const Vocabulary v("v", {"a", "b"});
  try {
    encode("abxa", v);
    FAIL() << "expected UncoverableCharacter";
  } catch (const UncoverableCharacter& e) {
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(Encode, SpaceWithoutMarkerEntryIsUncoverable) {
  const Vocabulary v("v", {"a", "\xE2\x96\x81" "a"}, "\xE2\x96\x81");
  EXPECT_EQ(surfaces(encode("a a", v)), (std::vector<std::string>{"a", "\xE2\x96\x81" "a"}));
  EXPECT_THROW(encode("a  a", v), UncoverableCharacter);
}

TEST(Encode, FallbackAppendsUnseenCharacters) {
  Vocabulary v("v", {"a", "b"});
  const auto seq = encode_with_fallback("ab\xC3\xA9" "a", v);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.surface(2), "\xC3\xA9");
  EXPECT_EQ(decode(seq), "ab\xC3\xA9" "a");
}

TEST(Decode, ConcatenatesSurfaces) {
  const auto v = food_vocab();
  TokenSequence seq{{{"fo", *v.find("fo")}, {"od", *v.find("od")}}, "food", std::nullopt};
  EXPECT_EQ(decode(seq), "food");
  EXPECT_EQ(decode(TokenSequence{}), "");
}

TEST(Decode, RoundTripsRandomCoveredText) {
  Rng rng(7);
  const auto teacher = demo::teacher_vocabulary();
  const auto student = demo::student_vocabulary();
  for (int n = 0; n < 300; ++n) {
    const std::string text = n % 2 ? oracle::random_text(rng, 1 + rng.below(12))
                                    : oracle::random_ascii(rng, 1 + rng.below(30));
    const auto t = encode(text, teacher);
    const auto s = encode(text, student);
    ASSERT_EQ(decode(t), text);
    ASSERT_EQ(decode(s), text);
    // Two vocabularies over the same characters agree on normalized text.
    ASSERT_EQ(t.normalized_text(), s.normalized_text());
    ASSERT_EQ(t.normalized_text(), text);
  }
}

TEST(Encode, Deterministic) {
  const auto v = demo::student_vocabulary();
  const auto a = encode("Emma buys 3 more apples", v);
  const auto b = encode("Emma buys 3 more apples", v);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Encode, DemoVocabulariesSegmentDifferently) {
  const auto t = encode("Emma buys stickers", demo::teacher_vocabulary());
  const auto s = encode("Emma buys stickers", demo::student_vocabulary());
  EXPECT_LT(t.size(), s.size());
}

TEST(NormalizeSurface, ReplacesMarkerPrefixWithSpace) {
  EXPECT_EQ(normalize_surface("\xE2\x96\x81The", std::string("\xE2\x96\x81")), " The");
  EXPECT_EQ(normalize_surface("The", std::string("\xE2\x96\x81")), "The");
  EXPECT_EQ(normalize_surface("\xC4\xA0The", std::string("\xC4\xA0")), " The");
  EXPECT_EQ(normalize_surface("\xC4\xA0The", std::nullopt), "\xC4\xA0The");
}

TEST(Vocabulary, RejectsInvalidEntries) {
  EXPECT_THROW(Vocabulary("v", {"a", "a"}), InvalidVocabulary);
  EXPECT_THROW(Vocabulary("v", {"a", ""}), InvalidVocabulary);
  EXPECT_THROW(Vocabulary("v", {"a\xE2\x96\x81"}, "\xE2\x96\x81"), InvalidVocabulary);
}

TEST(Vocabulary, SurfaceOutOfRangeThrows) {
  const auto v = food_vocab();
  EXPECT_THROW(v.surface(-1), OutOfVocab);
  EXPECT_THROW(v.surface(7), OutOfVocab);
}

TEST(Vocabulary, FindNormalizedPrefersLowestId) {
  const Vocabulary v("v", {"\xC4\xA0x", " x"}, "\xC4\xA0");
  EXPECT_EQ(v.find_normalized(" x"), 0);
}

TEST(Vocabulary, FileRoundTripWithEscapes) {
  const Vocabulary v("demo", {"a", "\xE2\x96\x81" "b", "tab\there", "line\nbreak", "back\\slash"}, "\xE2\x96\x81");
  std::stringstream buf;
  v.write(buf);
  const auto back = Vocabulary::parse(buf, "demo");
  ASSERT_EQ(back.size(), v.size());
  EXPECT_EQ(back.marker(), v.marker());
  for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i) EXPECT_EQ(back.surface(i), v.surface(i));
}

TEST(Vocabulary, ParseRejectsNonContiguousIds) {
  std::stringstream in("0\ta\n2\tb\n");
  EXPECT_THROW(Vocabulary::parse(in, "v"), InvalidVocabulary);
}

TEST(Vocabulary, ParseReadsMarkerHeader) {
  std::stringstream in("#marker=\xE2\x96\x81\n0\ta\n1\t\xE2\x96\x81" "a\n");
  const auto v = Vocabulary::parse(in, "v");
  EXPECT_EQ(v.marker(), std::string("\xE2\x96\x81"));
  EXPECT_EQ(decode(encode("a a", v)), "a a");
}

TEST(Vocabulary, LoadMissingFileIsIoError) {
  EXPECT_THROW(Vocabulary::load("/nonexistent/x.vocab"), IoError);
}

TEST(Vocabulary, ShippedDemoFilesMatchBuiltIns) {
  for (const auto& [file, built] : {std::pair{"demo-teacher.vocab", demo::teacher_vocabulary()},
                                    std::pair{"demo-student.vocab", demo::student_vocabulary()}}) {
    const auto loaded = Vocabulary::load(std::string(COTD_DATA_DIR) + "/" + file);
    ASSERT_EQ(loaded.size(), built.size()) << file;
    EXPECT_EQ(loaded.marker(), built.marker());
    for (TokenId i = 0; i < static_cast<TokenId>(built.size()); ++i) ASSERT_EQ(loaded.surface(i), built.surface(i));
  }
}
