#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "cotd/toy_train.hpp"

using namespace cotd;

namespace {

// Probability of `ids` under `m`, computed position by position without
// any of the library's helpers.
double naive_mean_nll(const ToyLM& m, const std::vector<TokenId>& ids) {
  const std::size_t V = m.vocab_size();
  double total = 0.0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::size_t row = 0;
    for (std::size_t k = m.order(); k > 0; --k) row = row * (V + 1) + (t >= k ? static_cast<std::size_t>(ids[t - k]) : V);
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(m.table()[row * V + v]);
    total -= std::log(std::exp(m.table()[row * V + static_cast<std::size_t>(ids[t])]) / z);
  }
  return total / static_cast<double>(ids.size());
}

ToyLM random_model(std::size_t V, std::size_t order, std::uint64_t seed) {
  ToyLM m(V, order);
  Rng rng(seed);
  for (auto& z : m.table()) z = rng.normal();
  return m;
}

std::vector<ToyExample> teacher_batch(const CategoricalTeacher& teacher, std::size_t n, std::size_t len,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ToyExample> out(n);
  for (auto& ex : out) {
    ex.ids = teacher.sample(len, rng);
    for (std::size_t t = 0; t < len; ++t) ex.targets.push_back(teacher.truncated_target(ex.ids, t));
  }
  return out;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.vocab_size = 8;
  cfg.order = 1;
  cfg.sequence_length = 16;
  cfg.n_train = 200;
  cfg.n_heldout = 50;
  cfg.seeds = 2;
  cfg.train.steps = 400;
  cfg.train.eval_every = 20;
  return cfg;
}

}  // namespace

TEST(Softmax, KnownValues) {
  const std::vector<double> flat = {0, 0, 0, 0};
  for (double p : softmax(flat)) EXPECT_DOUBLE_EQ(p, 0.25);
  const std::vector<double> logs = {std::log(1.0), std::log(2.0), std::log(3.0)};
  const auto p = softmax(logs);
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-15);
  const std::vector<double> huge = {1000.0, 1000.0};
  EXPECT_DOUBLE_EQ(softmax(huge)[0], 0.5);
  EXPECT_DOUBLE_EQ(log_sum_exp(huge), 1000.0 + std::log(2.0));
}

TEST(SampleMatchingLoss, UniformModelGivesLogV) {
  const ToyLM m(4, 2);
  const std::vector<TokenId> ids = {0, 3, 1, 2, 2};
  EXPECT_NEAR(sample_matching_loss(m, ids), std::log(4.0), 1e-12);
}

TEST(SampleMatchingLoss, ConfidentCorrectModelGivesZero) {
  ToyLM m(4, 1);
  const std::vector<TokenId> ids = {1, 2, 3};
  for (std::size_t t = 0; t < ids.size(); ++t) m.row(m.context_row(ids, t))[static_cast<std::size_t>(ids[t])] = 1000.0;
  EXPECT_NEAR(sample_matching_loss(m, ids), 0.0, 1e-12);
}

TEST(SampleMatchingLoss, MatchesDirectLikelihood) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_model(5, 2, seed);
    Rng rng(seed + 100);
    std::vector<TokenId> ids(10);
    for (auto& id : ids) id = static_cast<TokenId>(rng.below(5));
    EXPECT_NEAR(sample_matching_loss(m, ids), naive_mean_nll(m, ids), 1e-12);
  }
}

TEST(DistributionMatchingLoss, UniformTargetOnUniformModelGivesLogV) {
  const ToyLM m(4, 1);
  TargetSequence seq;
  seq.student_ids = {0, 1};
  for (TokenId g : seq.student_ids)
    seq.targets.push_back(StudentTarget::transferred({{0, 0.25}, {1, 0.25}, {2, 0.25}, {3, 0.25}}, g));
  EXPECT_NEAR(distribution_matching_loss(m, seq, seq.student_ids), std::log(4.0), 1e-12);
}

TEST(DistributionMatchingLoss, EqualsEntropyWhenStudentMatchesTarget) {
  ToyLM m(4, 0);
  const std::map<TokenId, double> p = {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}};
  for (const auto& [id, q] : p) m.row(0)[static_cast<std::size_t>(id)] = std::log(q);
  TargetSequence seq;
  seq.student_ids = {2};
  seq.targets = {StudentTarget::transferred(p, 2)};
  double entropy = 0.0;
  for (const auto& [id, q] : p) entropy -= q * std::log(q);
  EXPECT_NEAR(distribution_matching_loss(m, seq, seq.student_ids), entropy, 1e-12);
}

TEST(DistributionMatchingLoss, PartialSupportOnUniformModel) {
  const ToyLM m(3, 1);
  TargetSequence seq;
  seq.student_ids = {1};
  seq.targets = {StudentTarget::transferred({{0, 0.5}, {1, 0.5}}, 1)};
  EXPECT_NEAR(distribution_matching_loss(m, seq, seq.student_ids), std::log(3.0), 1e-12);
}

TEST(DistributionMatchingLoss, OneHotTargetsReduceToSampleMatching) {
  const auto m = random_model(6, 2, 4);
  TargetSequence seq;
  seq.student_ids = {5, 0, 3, 3, 1};
  for (TokenId g : seq.student_ids) seq.targets.push_back(StudentTarget::one_hot(g));
  EXPECT_NEAR(distribution_matching_loss(m, seq, seq.student_ids), sample_matching_loss(m, seq.student_ids), 1e-14);
}

TEST(GradCheck, BothObjectivesAgreeWithFiniteDifferences) {
  const auto teacher = CategoricalTeacher::synthetic(8, 2, 3);
  const auto batch = teacher_batch(teacher, 4, 12, 5);
  for (Objective obj : {Objective::sample_matching, Objective::distribution_matching}) {
    const auto rep = grad_check(random_model(8, 2, 6), obj, batch);
    EXPECT_GT(rep.checked, 0u);
    EXPECT_LT(rep.max_relative_error, 1e-5) << to_string(obj);
  }
}

TEST(Gradient, VanishesWhenStudentEqualsFullTarget) {
  ToyLM m(4, 1);
  const std::map<TokenId, double> p = {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}};
  const std::vector<ToyExample> batch = {{{2}, {StudentTarget::transferred(p, 2)}}};
  for (const auto& [id, q] : p) m.row(m.context_row(batch[0].ids, 0))[static_cast<std::size_t>(id)] = std::log(q);
  ToyGradient g(m);
  batch_loss(m, Objective::distribution_matching, batch, &g);
  double sq = 0.0;
  for (double v : g.values) sq += v * v;
  EXPECT_LT(std::sqrt(sq), 1e-10);
}

TEST(SgdStep, FullBatchSmallStepsDecreaseLoss) {
  const auto teacher = CategoricalTeacher::synthetic(6, 1, 2);
  const auto batch = teacher_batch(teacher, 8, 10, 3);
  for (Objective obj : {Objective::sample_matching, Objective::distribution_matching}) {
    auto m = random_model(6, 1, 9);
    double prev = batch_loss(m, obj, batch);
    for (int step = 0; step < 50; ++step) {
      sgd_step(m, obj, batch, 0.5);
      const double now = batch_loss(m, obj, batch);
      ASSERT_LT(now, prev) << to_string(obj) << " step " << step;
      prev = now;
    }
  }
}

TEST(CategoricalTeacher, RowsAreDistributions) {
  const auto t = CategoricalTeacher::synthetic(16, 2, 1);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double sum = 0.0;
    std::size_t big = 0;
    for (double p : t.distribution(r)) {
      EXPECT_GT(p, 0.0);
      sum += p;
      big += p > 0.01 / 11.0 + 1e-12;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LE(big, 5u);
  }
}

TEST(CategoricalTeacher, TruncatedTargetKeepsTopK) {
  const auto t = CategoricalTeacher::synthetic(16, 1, 2);
  Rng rng(1);
  const auto ids = t.sample(20, rng);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto target = t.truncated_target(ids, i, 3);
    if (target.kind() == TargetKind::one_hot) continue;
    EXPECT_LE(target.entries().size(), 3u);
    EXPECT_LE(target.mass(), 1.0 + 1e-12);
    const auto p = t.distribution(t.context_row(ids, i));
    for (const auto& [id, q] : target.entries()) EXPECT_EQ(q, p[static_cast<std::size_t>(id)]);
  }
}

TEST(Experiment, DeterministicForFixedSeed) {
  const auto teacher = CategoricalTeacher::synthetic(8, 1, 4);
  const auto a = run_convergence_experiment(teacher, small_config());
  const auto b = run_convergence_experiment(teacher, small_config());
  ASSERT_EQ(a.seeds.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(a.seeds[s].sample_matching.curve, b.seeds[s].sample_matching.curve);
    EXPECT_EQ(a.seeds[s].distribution_matching.curve, b.seeds[s].distribution_matching.curve);
  }
  std::ostringstream ca, cb;
  write_curves_csv(ca, a);
  write_curves_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
}

TEST(Experiment, DeterministicTeacherIsLearnedByBothObjectives) {
  const auto teacher = CategoricalTeacher::deterministic(8, 1, 5);
  const auto r = run_convergence_experiment(teacher, small_config());
  for (const auto& s : r.seeds) {
    EXPECT_EQ(s.teacher_heldout_nll, 0.0);
    EXPECT_TRUE(s.sample_matching.steps_to_threshold);
    EXPECT_TRUE(s.distribution_matching.steps_to_threshold);
    EXPECT_LT(s.distribution_matching.final_heldout, s.tau);
  }
}

TEST(FirstStepBelow, FindsFirstCrossing) {
  const LossCurve c = {{25, 0, 3.0}, {50, 0, 2.0}, {75, 0, 2.5}, {100, 0, 1.0}};
  EXPECT_EQ(first_step_below(c, 2.0), 50u);
  EXPECT_EQ(first_step_below(c, 1.5), 100u);
  EXPECT_FALSE(first_step_below(c, 0.5));
}

TEST(SeedResult, NeverReachingThresholdCountsAsSlowest) {
  SeedResult s;
  EXPECT_FALSE(s.dm_not_slower());
  s.distribution_matching.steps_to_threshold = 100;
  EXPECT_TRUE(s.dm_not_slower());
  s.sample_matching.steps_to_threshold = 50;
  EXPECT_FALSE(s.dm_not_slower());
  s.sample_matching.steps_to_threshold = 100;
  EXPECT_TRUE(s.dm_not_slower());
}

TEST(ToyErrors, InvalidInputsAreRejected) {
  EXPECT_THROW(ToyLM(0, 1), ValidationError);
  const ToyLM m(4, 1);
  const std::vector<TokenId> bad = {0, 4};
  EXPECT_THROW(sample_matching_loss(m, bad), OutOfVocab);
  EXPECT_THROW(sample_matching_loss(m, std::vector<TokenId>{}), ValidationError);
  TargetSequence seq;
  seq.student_ids = {0, 1};
  seq.targets = {StudentTarget::one_hot(0)};
  EXPECT_THROW(distribution_matching_loss(m, seq, seq.student_ids), LengthMismatch);
  const std::vector<ToyExample> batch = {{{1}, {}}};
  EXPECT_THROW(grad_check(m, Objective::sample_matching, batch, 0.0), ValidationError);
  ToyLM copy = m;
  EXPECT_THROW(train_toy(copy, batch, batch, {.learning_rate = 0.0}), ValidationError);
  EXPECT_THROW(train_toy(copy, {}, batch, {}), ValidationError);
}
