#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotd/rng.hpp"
#include "cotd/toy_lm.hpp"

namespace cotd {

/// Known order-m categorical process used as the teacher in the toy
/// distillation experiment. Rows are full distributions over the vocabulary.
class CategoricalTeacher {
public:
  CategoricalTeacher(std::size_t vocab_size, std::size_t order)
      : shape_(vocab_size, order), probs_(shape_.rows() * vocab_size, 0.0) {}

  /// Each row puts most of its mass on `support` tokens (Dirichlet weights
  /// with the given concentration) and spreads `tail_mass` evenly over the
  /// rest.
  static CategoricalTeacher synthetic(std::size_t vocab_size, std::size_t order, std::uint64_t seed,
                                      std::size_t support = 5, double tail_mass = 0.01,
                                      double concentration = 1.0) {
    CategoricalTeacher t(vocab_size, order);
    Rng rng(derive_seed(seed, "toy-teacher"));
    support = std::min(support, vocab_size);
    const double tail = support == vocab_size ? 0.0 : tail_mass;
    std::vector<std::size_t> ids(vocab_size);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::iota(ids.begin(), ids.end(), 0);
      rng.shuffle(ids);
      std::vector<double> w(support);
      double sum = 0.0;
      for (auto& x : w) sum += (x = rng.gamma(concentration) + 1e-3);
      double* row = t.probs_.data() + r * vocab_size;
      for (std::size_t k = 0; k < vocab_size; ++k) row[k] = tail / static_cast<double>(vocab_size - support);
      if (tail == 0.0)
        for (std::size_t k = 0; k < vocab_size; ++k) row[k] = 0.0;
      for (std::size_t k = 0; k < support; ++k) row[ids[k]] = (1.0 - tail) * w[k] / sum;
    }
    return t;
  }

  /// Every context has a single successor.
  static CategoricalTeacher deterministic(std::size_t vocab_size, std::size_t order, std::uint64_t seed) {
    CategoricalTeacher t(vocab_size, order);
    Rng rng(derive_seed(seed, "toy-teacher-deterministic"));
    for (std::size_t r = 0; r < t.rows(); ++r) t.probs_[r * vocab_size + rng.below(vocab_size)] = 1.0;
    return t;
  }

  std::size_t vocab_size() const noexcept { return shape_.vocab_size(); }
  std::size_t order() const noexcept { return shape_.order(); }
  std::size_t rows() const noexcept { return shape_.rows(); }

  std::span<const double> distribution(std::size_t row) const {
    return {probs_.data() + row * vocab_size(), vocab_size()};
  }
  std::span<double> distribution(std::size_t row) { return {probs_.data() + row * vocab_size(), vocab_size()}; }

  std::size_t context_row(std::span<const TokenId> ids, std::size_t t) const { return shape_.context_row(ids, t); }

  std::vector<TokenId> sample(std::size_t length, Rng& rng) const {
    std::vector<TokenId> ids;
    ids.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
      ids.push_back(0);
      const auto p = distribution(context_row(ids, t));
      double u = rng.uniform();
      std::size_t pick = 0;
      for (; pick + 1 < p.size(); ++pick) {
        if (u < p[pick]) break;
        u -= p[pick];
      }
      while (p[pick] == 0.0 && pick > 0) --pick;
      ids.back() = static_cast<TokenId>(pick);
    }
    return ids;
  }

  /// Mean -ln p_teacher over all positions of `seqs`.
  double nll(const std::vector<std::vector<TokenId>>& seqs) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : seqs)
      for (std::size_t t = 0; t < s.size(); ++t, ++n)
        total -= std::log(distribution(context_row(s, t))[static_cast<std::size_t>(s[t])]);
    return n ? total / static_cast<double>(n) : 0.0;
  }

  /// Top-k record for position `t`, truncated the same way teacher records
  /// are: entries below the top k are zeroed; the emitted token must be in the
  /// top k, otherwise the target is one-hot on it.
  StudentTarget truncated_target(std::span<const TokenId> ids, std::size_t t, std::size_t k = 5,
                                 bool renormalize = false) const {
    const auto p = distribution(context_row(ids, t));
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::map<TokenId, double> kept;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
      if (p[order[i]] > 0.0) kept.emplace(static_cast<TokenId>(order[i]), p[order[i]]);
    const TokenId gold = ids[t];
    if (!kept.contains(gold)) return StudentTarget::one_hot(gold);
    if (renormalize) {
      double s = 0.0;
      for (const auto& [id, q] : kept) s += q;
      for (auto& [id, q] : kept) q /= s;
    }
    return StudentTarget::transferred(std::move(kept), gold);
  }

private:
  ToyLM shape_;  // reused only for its context indexing
  std::vector<double> probs_;
};

struct TrainConfig {
  double learning_rate = 30.0;
  std::size_t steps = 3000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  Objective objective = Objective::distribution_matching;
  std::size_t eval_every = 25;
};

struct LossPoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;

  bool operator==(const LossPoint&) const = default;
};

using LossCurve = std::vector<LossPoint>;

/// Mini-batch gradient descent from a zero-initialized model. Batches are
/// drawn from a stream that depends only on `config.seed`, so both objectives
/// see identical data when given the same seed. Held-out loss is always the
/// sample-matching loss (mean NLL) on `heldout`.
inline LossCurve train_toy(ToyLM& model, const std::vector<ToyExample>& train,
                           const std::vector<ToyExample>& heldout, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (train.empty() || heldout.empty()) throw ValidationError("training and held-out sets must be non-empty");
  Rng batches(derive_seed(config.seed, "toy-batches"));
  LossCurve curve;
  std::vector<const ToyExample*> batch(std::min(config.batch_size, train.size()));
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (auto& ex : batch) ex = &train[batches.below(train.size())];
    const double loss = sgd_step(model, config.objective, batch, config.learning_rate);
    if (step % config.eval_every == 0 || step == config.steps)
      curve.push_back({step, loss, batch_loss(model, Objective::sample_matching, heldout)});
  }
  return curve;
}

struct ExperimentConfig {
  std::size_t vocab_size = 16;
  std::size_t order = 2;
  std::size_t sequence_length = 32;
  std::size_t n_train = 2000;
  std::size_t n_heldout = 200;
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  std::size_t top_k = 5;
  bool renormalize = false;
  double tau_margin = 0.05;
  TrainConfig train;
};

struct ArmResult {
  Objective objective = Objective::sample_matching;
  std::size_t seed_index = 0;
  LossCurve curve;
  std::optional<std::size_t> steps_to_threshold;
  double final_heldout = 0.0;
};

struct SeedResult {
  std::size_t seed_index = 0;
  double teacher_heldout_nll = 0.0;
  double tau = 0.0;
  ArmResult sample_matching;
  ArmResult distribution_matching;

  /// Distribution matching reached tau no later than sample matching (a
  /// threshold never reached counts as infinitely late).
  bool dm_not_slower() const {
    if (!distribution_matching.steps_to_threshold) return false;
    return !sample_matching.steps_to_threshold ||
           *distribution_matching.steps_to_threshold <= *sample_matching.steps_to_threshold;
  }
  bool dm_not_higher() const { return distribution_matching.final_heldout <= sample_matching.final_heldout; }
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;

  std::size_t dm_faster_count() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.dm_not_slower(); }));
  }
  std::size_t dm_lower_count() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.dm_not_higher(); }));
  }
};

inline std::optional<std::size_t> first_step_below(const LossCurve& curve, double tau) {
  for (const auto& p : curve)
    if (p.heldout_loss <= tau) return p.step;
  return std::nullopt;
}

/// Trains one student per objective for each seed on identical data (token
/// samples for sample matching, their top-k-truncated teacher distributions
/// for distribution matching) and records when each crosses
/// tau = teacher held-out NLL + margin.
inline ExperimentResult run_convergence_experiment(const CategoricalTeacher& teacher, const ExperimentConfig& cfg) {
  if (cfg.seeds == 0) throw ValidationError("need at least one seed");
  ExperimentResult result;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = derive_seed(cfg.base_seed, "toy-seed/" + std::to_string(s));
    Rng data(derive_seed(seed, "toy-data"));
    auto make = [&](std::size_t n) {
      std::vector<ToyExample> out(n);
      for (auto& ex : out) {
        ex.ids = teacher.sample(cfg.sequence_length, data);
        ex.targets.reserve(ex.ids.size());
        for (std::size_t t = 0; t < ex.ids.size(); ++t)
          ex.targets.push_back(teacher.truncated_target(ex.ids, t, cfg.top_k, cfg.renormalize));
      }
      return out;
    };
    const auto train = make(cfg.n_train);
    const auto heldout = make(cfg.n_heldout);
    std::vector<std::vector<TokenId>> heldout_ids;
    for (const auto& ex : heldout) heldout_ids.push_back(ex.ids);

    SeedResult sr;
    sr.seed_index = s;
    sr.teacher_heldout_nll = teacher.nll(heldout_ids);
    sr.tau = sr.teacher_heldout_nll + cfg.tau_margin;
    for (Objective obj : {Objective::sample_matching, Objective::distribution_matching}) {
      ToyLM student(teacher.vocab_size(), teacher.order());
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.objective = obj;
      ArmResult arm;
      arm.objective = obj;
      arm.seed_index = s;
      arm.curve = train_toy(student, train, heldout, tc);
      arm.steps_to_threshold = first_step_below(arm.curve, sr.tau);
      arm.final_heldout = arm.curve.empty() ? 0.0 : arm.curve.back().heldout_loss;
      (obj == Objective::sample_matching ? sr.sample_matching : sr.distribution_matching) = std::move(arm);
    }
    result.seeds.push_back(std::move(sr));
  }
  return result;
}

/// curves.csv: step,objective,seed,train_loss,heldout_loss
inline void write_curves_csv(std::ostream& out, const ExperimentResult& r) {
  char buf[160];
  out << "step,objective,seed,train_loss,heldout_loss\n";
  for (const auto& s : r.seeds)
    for (const ArmResult* arm : {&s.sample_matching, &s.distribution_matching})
      for (const auto& p : arm->curve) {
        std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.17g,%.17g\n", p.step, to_string(arm->objective).data(),
                      s.seed_index, p.train_loss, p.heldout_loss);
        out << buf;
      }
}

inline nlohmann::json summary_json(const ExperimentResult& r) {
  auto seeds = nlohmann::json::array();
  auto steps = [](const ArmResult& a) {
    return a.steps_to_threshold ? nlohmann::json(*a.steps_to_threshold) : nlohmann::json("threshold not reached");
  };
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed_index},
                     {"tau", s.tau},
                     {"teacher_heldout_nll", s.teacher_heldout_nll},
                     {"sample_matching", {{"steps_to_threshold", steps(s.sample_matching)},
                                          {"final_heldout_loss", s.sample_matching.final_heldout}}},
                     {"distribution_matching", {{"steps_to_threshold", steps(s.distribution_matching)},
                                                {"final_heldout_loss", s.distribution_matching.final_heldout}}}});
  return {{"seeds", seeds},
          {"distribution_matching_not_slower", r.dm_faster_count()},
          {"distribution_matching_not_higher", r.dm_lower_count()},
          {"total_seeds", r.seeds.size()}};
}

}  // namespace cotd
