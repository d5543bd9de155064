#include <filesystem>
#include <fstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "cotd/cached_teacher.hpp"
#include "cotd/corpus.hpp"
#include "cotd/mock_teacher.hpp"
#include "cotd/pipeline.hpp"

using namespace cotd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cotd_corpus_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Question question(int i) {
  return {"q" + std::to_string(i), "Question text " + std::to_string(i) + "?", std::to_string(i)};
}

Solution solution(const Question& q, std::size_t index, bool correct = true) {
  Solution s;
  s.question_id = q.id;
  s.sample_index = index;
  s.cot_text = "Reasoning for " + q.id + ".";
  s.extracted_answer = correct ? q.gold_answer : q.gold_answer + "1";
  s.correct = correct;
  return s;
}

// Counts calls; fails on one chosen question.
class ScriptedTeacher final : public TeacherClient {
public:
  explicit ScriptedTeacher(std::string fail_on = {}) : fail_on_(std::move(fail_on)) {}
  std::vector<Completion> complete(const CompletionRequest& r) override {
    ++calls;
    const auto q = MockTeacher::target_question(r.prompt);
    if (!fail_on_.empty() && q == fail_on_) throw EndpointError(503, r.first_sample, "unavailable");
    std::vector<Completion> out;
    for (std::size_t k = 0; k < r.n; ++k)
      out.push_back({q + " #" + std::to_string(r.first_sample + k) + ". The answer is 1", {}});
    return out;
  }
  std::size_t calls = 0;

private:
  std::string fail_on_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(MockTeacher, ErrorRateZeroKeepsEverything) {
  const auto qs = synthesize_questions(10, 1);
  MockTeacher teacher({.error_rate = 0.0, .seed = 2});
  const auto all = sample_corpus(qs, teacher, 8);
  ASSERT_EQ(all.size(), 80u);
  EXPECT_EQ(filter_correct(all).size(), 80u);
}

TEST(MockTeacher, ErrorRateOneKeepsNothing) {
  const auto qs = synthesize_questions(10, 1);
  MockTeacher teacher({.error_rate = 1.0, .seed = 2});
  const auto all = sample_corpus(qs, teacher, 8);
  EXPECT_TRUE(filter_correct(all).empty());
  EXPECT_EQ(questions_without_data(qs, filter_correct(all)).size(), 10u);
}

TEST(MockTeacher, DependsOnlyOnPromptIndexAndConfig) {
  MockTeacher teacher({.error_rate = 0.3, .seed = 4});
  const std::string prompt = render_teacher_prompt(synthesize_questions(1, 7)[0]);
  const auto whole = teacher.complete({prompt, 6, 0, {}});
  const auto tail = teacher.complete({prompt, 3, 3, {}});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(whole[3 + k], tail[k]);
}

TEST(MockTeacher, StepRecordsAreWellFormed) {
  MockTeacher teacher({.error_rate = 0.0, .seed = 8});
  for (const auto& c : teacher.complete({render_teacher_prompt(synthesize_questions(1, 3)[0]), 5, 0, {}})) {
    std::string text;
    for (const auto& st : c.steps) {
      EXPECT_EQ(st.defect(), "");
      text += st.chosen_surface;
    }
    EXPECT_EQ(text, c.text);
  }
}

TEST(SampleSolutions, ScoresAgainstGold) {
  const auto q = synthesize_questions(1, 5)[0];
  MockTeacher teacher({.error_rate = 0.5, .seed = 1});
  for (const auto& s : sample_solutions(q, teacher, 20)) {
    ASSERT_TRUE(s.extracted_answer);
    EXPECT_EQ(s.correct, answers_match(*s.extracted_answer, q.gold_answer));
    EXPECT_EQ(s.cot_text.find("The answer is"), std::string::npos);
  }
}

TEST(FilterCorrect, KeepsCorrectInOrderAndIsIdempotent) {
  const auto q1 = question(1), q2 = question(2);
  const std::vector<Solution> all = {solution(q1, 0), solution(q1, 1, false), solution(q2, 0, false),
                                     solution(q2, 1)};
  const auto kept = filter_correct(all);
  EXPECT_EQ(kept, (std::vector<Solution>{all[0], all[3]}));
  EXPECT_EQ(filter_correct(kept), kept);
  EXPECT_TRUE(questions_without_data({q1, q2}, kept).empty());
  EXPECT_EQ(questions_without_data({q1, q2}, {all[0]}), std::vector<std::string>{"q2"});
}

TEST(FilterCorrect, DedupDropsRepeatedTriples) {
  const auto q = question(1);
  const std::vector<Solution> all = {solution(q, 0), solution(q, 1), solution(q, 2)};
  EXPECT_EQ(filter_correct(all).size(), 3u);
  EXPECT_EQ(filter_correct(all, true), std::vector<Solution>{all[0]});
}

TEST(FormatInstance, ZeroShotFormats) {
  const auto q = question(7);
  const auto s = solution(q, 0);
  const auto b3 = format_instance(q, s, FormatTag::B3_zeroshot_answer_only);
  EXPECT_EQ(b3.input_text, "Question text 7?");
  EXPECT_EQ(b3.output_text, "7");
  const auto b4 = format_instance(q, s, FormatTag::B4_zeroshot_cot);
  EXPECT_EQ(b4.input_text, "Question text 7?");
  EXPECT_EQ(b4.output_text, "Reasoning for q7. The answer is 7");
  EXPECT_EQ(format_violation(b3), "");
  EXPECT_EQ(format_violation(b4), "");
}

TEST(FormatInstance, InContextFormats) {
  std::vector<Question> qs;
  std::vector<Solution> kept;
  for (int i = 1; i <= 6; ++i) {
    qs.push_back(question(i));
    kept.push_back(solution(qs.back(), 0));
  }
  const auto ex = select_exemplars(qs, kept, "q3");
  ASSERT_EQ(ex.size(), 4u);
  EXPECT_EQ(ex[0].first.id, "q1");
  EXPECT_EQ(ex[3].first.id, "q5");

  const auto b1 = format_instance(qs[2], kept[2], FormatTag::B1_incontext_answer_only, ex);
  EXPECT_EQ(b1.input_text,
            "Question: Question text 1?\nAnswer: 1\n\n"
            "Question: Question text 2?\nAnswer: 2\n\n"
            "Question: Question text 4?\nAnswer: 4\n\n"
            "Question: Question text 5?\nAnswer: 5\n\n"
            "Question: Question text 3?\nAnswer:");
  EXPECT_EQ(b1.output_text, "3");

  const auto b2 = format_instance(qs[2], kept[2], FormatTag::B2_incontext_cot, ex);
  EXPECT_TRUE(b2.input_text.starts_with("Question: Question text 1?\nAnswer: Reasoning for q1. The answer is 1\n\n"));
  EXPECT_EQ(b2.output_text, "Reasoning for q3. The answer is 3");
  EXPECT_EQ(format_violation(b1), "");
  EXPECT_EQ(format_violation(b2), "");
}

TEST(FormatInstance, TargetNeverServesAsItsOwnExemplar) {
  std::vector<Question> qs;
  std::vector<Solution> kept;
  for (int i = 1; i <= 5; ++i) {
    qs.push_back(question(i));
    kept.push_back(solution(qs.back(), 0));
  }
  // Even when handed an exemplar list that includes the target, it is skipped.
  std::vector<Exemplar> with_self;
  for (std::size_t i = 0; i < 5; ++i) with_self.emplace_back(qs[i], kept[i]);
  const auto f = format_instance(qs[0], kept[0], FormatTag::B1_incontext_answer_only, with_self);
  EXPECT_EQ(f.input_text.find("Question text 1?"), f.input_text.rfind("Question: ") + 10);

  for (const auto& inst : pipeline::format_dataset(qs, kept, {})) {
    if (!is_in_context(inst.format_tag)) continue;
    const auto target = "Question: " + qs[std::stoul(inst.question_id.substr(1)) - 1].text;
    EXPECT_EQ(inst.input_text.find(target), inst.input_text.rfind("Question: "));
  }
}

TEST(FormatInstance, InsufficientExemplars) {
  std::vector<Question> qs = {question(1), question(2), question(3), question(4)};
  std::vector<Solution> kept;
  for (const auto& q : qs) kept.push_back(solution(q, 0));
  const auto ex = select_exemplars(qs, kept, "q1");
  EXPECT_EQ(ex.size(), 3u);
  EXPECT_THROW(format_instance(qs[0], kept[0], FormatTag::B2_incontext_cot, ex), InsufficientExemplars);
  EXPECT_NO_THROW(format_instance(qs[0], kept[0], FormatTag::B4_zeroshot_cot, ex));
}

TEST(FormatViolation, FlagsBrokenInstances) {
  FormattedInstance f{FormatTag::B3_zeroshot_answer_only, "q", "Question text", "The answer is 3", {}};
  EXPECT_NE(format_violation(f), "");
  f = {FormatTag::B4_zeroshot_cot, "q", "Question text", "3", {}};
  EXPECT_NE(format_violation(f), "");
  f = {FormatTag::B1_incontext_answer_only, "q", "Question: a\nAnswer:", "3", {}};
  EXPECT_NE(format_violation(f), "");
}

TEST(MixFormats, EqualWeightsInterleave) {
  std::map<FormatTag, std::vector<FormattedInstance>> by;
  for (auto tag : kAllFormats)
    for (int i = 0; i < 1000; ++i) by[tag].push_back({tag, "q" + std::to_string(i), "in", "out", {}});
  std::map<FormatTag, double> ratio;
  for (auto tag : kAllFormats) ratio[tag] = 1.0;
  const auto mixed = mix_formats(by, ratio, 3);
  ASSERT_EQ(mixed.size(), 4000u);
  std::map<FormatTag, int> counts;
  for (const auto& f : mixed) ++counts[f.format_tag];
  for (auto tag : kAllFormats) EXPECT_EQ(counts[tag], 1000);
  for (std::size_t w = 0; w < mixed.size(); w += 4) {
    std::set<FormatTag> window;
    for (std::size_t k = 0; k < 4; ++k) window.insert(mixed[w + k].format_tag);
    ASSERT_EQ(window.size(), 4u) << w;
  }
  EXPECT_EQ(mix_formats(by, ratio, 3), mixed);
  EXPECT_NE(mix_formats(by, ratio, 4), mixed);
}

TEST(MixFormats, WeightedRatio) {
  std::map<FormatTag, std::vector<FormattedInstance>> by;
  for (int i = 0; i < 100; ++i) {
    by[FormatTag::B2_incontext_cot].push_back({FormatTag::B2_incontext_cot, "a", "", "", {}});
    by[FormatTag::B4_zeroshot_cot].push_back({FormatTag::B4_zeroshot_cot, "b", "", "", {}});
  }
  const auto mixed = mix_formats(by, pipeline::parse_ratio("B2=1,B4=3"), 0);
  ASSERT_EQ(mixed.size(), 200u);
  // While both lists last, each window of four holds one B2 and three B4.
  for (std::size_t w = 0; w + 4 <= 132; w += 4) {
    int b2 = 0;
    for (std::size_t k = 0; k < 4; ++k) b2 += mixed[w + k].format_tag == FormatTag::B2_incontext_cot;
    ASSERT_EQ(b2, 1) << w;
  }
  EXPECT_THROW(mix_formats(by, {{FormatTag::B2_incontext_cot, 0.0}}, 0), ValidationError);
  EXPECT_THROW(mix_formats(by, {{FormatTag::B2_incontext_cot, -1.0}}, 0), ValidationError);
}

TEST(ParseRatio, Errors) {
  EXPECT_THROW(pipeline::parse_ratio("B2"), ValidationError);
  EXPECT_THROW(pipeline::parse_ratio("B9=1"), ValidationError);
  EXPECT_THROW(pipeline::parse_ratio("B2=x"), ValidationError);
  EXPECT_EQ(pipeline::parse_ratio("B1_incontext_answer_only=2").at(FormatTag::B1_incontext_answer_only), 2.0);
}

TEST(SplitDev, SizesAndDeterminism) {
  std::vector<int> items(1300);
  for (int i = 0; i < 1300; ++i) items[static_cast<std::size_t>(i)] = i;
  const auto [dev, test] = split_dev(items, 500, 42);
  EXPECT_EQ(dev.size(), 500u);
  EXPECT_EQ(test.size(), 800u);
  EXPECT_TRUE(std::is_sorted(dev.begin(), dev.end()));
  std::set<int> all(dev.begin(), dev.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), 1300u);
  EXPECT_EQ(split_dev(items, 500, 42).first, dev);
  EXPECT_NE(split_dev(items, 500, 43).first, dev);
  EXPECT_THROW(split_dev(items, 1300, 1), TooSmall);
}

TEST(SplitDev, GroupsNeverStraddle) {
  std::vector<std::string> items;
  for (int q = 0; q < 50; ++q)
    for (int k = 0; k < 3; ++k) items.push_back("g" + std::to_string(q) + "/" + std::to_string(k));
  auto key = [](const std::string& s) { return s.substr(0, s.find('/')); };
  const auto [dev, test] = split_dev_grouped(items, key, 10, 7);
  EXPECT_EQ(dev.size(), 30u);
  std::set<std::string> dev_groups;
  for (const auto& d : dev) dev_groups.insert(key(d));
  for (const auto& t : test) EXPECT_FALSE(dev_groups.contains(key(t)));
}

TEST(CachedTeacher, SecondRunIsServedFromDisk) {
  const auto dir = scratch("cache");
  ScriptedTeacher inner;
  CachedTeacher cached(inner, dir);
  const CompletionRequest r{"Question: x\nAnswer:", 4, 0, {}};
  const auto first = cached.complete(r);
  EXPECT_EQ(inner.calls, 1u);
  const auto second = cached.complete(r);
  EXPECT_EQ(inner.calls, 1u);
  EXPECT_EQ(first, second);
  EXPECT_EQ(cached.hits(), 4u);
  // A partial overlap fetches only the missing samples.
  const auto wider = cached.complete({r.prompt, 6, 0, {}});
  EXPECT_EQ(inner.calls, 2u);
  EXPECT_EQ(wider[5].text, "x #5. The answer is 1");
  // Different decode params are a different key.
  cached.complete({r.prompt, 1, 0, {.max_tokens = 10}});
  EXPECT_EQ(inner.calls, 3u);
}

TEST(Gen, WritesPartialResultsOnFailure) {
  const auto dir = scratch("partial");
  std::vector<Question> qs = {question(1), question(2), question(3)};
  ScriptedTeacher teacher(qs[1].text);
  const auto out = (dir / "solutions.jsonl").string();
  EXPECT_THROW(pipeline::gen(qs, teacher, {.samples = 3, .params = {}, .max_in_flight = 1}, out), EndpointError);
  const auto partial = pipeline::read_solutions(out);
  ASSERT_EQ(partial.size(), 3u);
  for (const auto& s : partial) EXPECT_EQ(s.question_id, "q1");
}

TEST(Gen, ByteIdenticalAcrossRunsAndWorkerCounts) {
  const auto dir = scratch("gen");
  const auto qs = synthesize_questions(12, 9);
  MockTeacher teacher({.error_rate = 0.2, .seed = 1});
  pipeline::gen(qs, teacher, {.samples = 5, .params = {}, .max_in_flight = 1}, (dir / "a.jsonl").string());
  pipeline::gen(qs, teacher, {.samples = 5, .params = {}, .max_in_flight = 4}, (dir / "b.jsonl").string());
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
}

TEST(SolutionJson, RoundTrip) {
  Solution s = solution(question(3), 2);
  s.teacher_steps = std::vector<TeacherStep>{{" 3", {{" 3", 0.9}, {" 4", 0.1 / 3.0}}}};
  EXPECT_EQ(solution_from_json(to_json(s)), s);
  s.extracted_answer.reset();
  s.correct = false;
  s.teacher_steps.reset();
  EXPECT_EQ(solution_from_json(nlohmann::json::parse(to_json(s).dump())), s);
}

TEST(QuestionJson, NormalizesGoldAndRejectsNonNumbers) {
  const auto q = question_from_json(nlohmann::json::parse(R"({"id":"a","question":"?","answer":"$1,200"})"));
  EXPECT_EQ(q.gold_answer, "1200");
  EXPECT_EQ(question_from_json(nlohmann::json::parse(R"({"id":"a","question":"?","answer":12})")).gold_answer, "12");
  EXPECT_THROW(question_from_json(nlohmann::json::parse(R"({"id":"a","question":"?","answer":"ten"})")),
               ValidationError);
}
