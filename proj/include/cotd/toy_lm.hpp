#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cotd/error.hpp"
#include "cotd/token.hpp"
#include "cotd/transfer.hpp"

namespace cotd {

/// Tabular order-m autoregressive model: one logit row per context of the m
/// previous ids, where positions before the start read as a padding symbol
/// (id == vocab_size).
class ToyLM {
public:
  ToyLM(std::size_t vocab_size, std::size_t order) : vocab_(vocab_size), order_(order) {
    if (vocab_size == 0) throw ValidationError("vocabulary size must be positive");
    std::size_t rows = 1;
    for (std::size_t k = 0; k < order; ++k) rows *= vocab_size + 1;
    rows_ = rows;
    logits_.assign(rows_ * vocab_, 0.0);
  }

  std::size_t vocab_size() const noexcept { return vocab_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t padding_id() const noexcept { return vocab_; }

  std::span<double> row(std::size_t r) { return {logits_.data() + r * vocab_, vocab_}; }
  std::span<const double> row(std::size_t r) const { return {logits_.data() + r * vocab_, vocab_}; }
  std::vector<double>& table() noexcept { return logits_; }
  const std::vector<double>& table() const noexcept { return logits_; }

  /// Row for predicting position `t` of `ids` (uses ids[t-m .. t-1]).
  std::size_t context_row(std::span<const TokenId> ids, std::size_t t) const {
    std::size_t r = 0;
    for (std::size_t k = order_; k > 0; --k) {
      std::size_t sym = vocab_;
      if (t >= k) {
        const TokenId id = ids[t - k];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_) throw OutOfVocab(id, vocab_);
        sym = static_cast<std::size_t>(id);
      }
      r = r * (vocab_ + 1) + sym;
    }
    return r;
  }

private:
  std::size_t vocab_;
  std::size_t order_;
  std::size_t rows_ = 1;
  std::vector<double> logits_;
};

inline std::vector<double> softmax(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - top));
  for (auto& v : p) v /= sum;
  return p;
}

inline double log_sum_exp(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - top);
  return top + std::log(sum);
}

/// Student distribution after `context` (only the last `order` ids matter).
inline std::vector<double> next_token_distribution(const ToyLM& model, std::span<const TokenId> context) {
  std::vector<TokenId> padded(context.begin(), context.end());
  padded.push_back(0);  // placeholder for the predicted position
  return softmax(model.row(model.context_row(padded, context.size())));
}

enum class Objective { sample_matching, distribution_matching };

inline std::string_view to_string(Objective o) noexcept {
  return o == Objective::sample_matching ? "sample_matching" : "distribution_matching";
}

/// One training sequence. Distribution matching reads `targets`; sample
/// matching only the ids.
struct ToyExample {
  std::vector<TokenId> ids;
  std::vector<StudentTarget> targets;
};

/// Dense gradient with the list of rows it touches.
struct ToyGradient {
  std::vector<double> values;
  std::vector<bool> touched;

  explicit ToyGradient(const ToyLM& m) : values(m.table().size(), 0.0), touched(m.rows(), false) {}
};

namespace detail {

// Accumulates -sum_v w_v ln p(v) for one position; optionally adds its
// gradient (scale * (sum_w * p - w)) into `grad`.
template <class Weights>
double position_loss(const ToyLM& m, std::size_t r, const Weights& weights, ToyGradient* grad, double scale) {
  const auto z = m.row(r);
  const double lse = log_sum_exp(z);
  double loss = 0.0;
  double total_w = 0.0;
  for (const auto& [id, w] : weights) {
    if (id < 0 || static_cast<std::size_t>(id) >= m.vocab_size()) throw OutOfVocab(id, m.vocab_size());
    loss -= w * (z[static_cast<std::size_t>(id)] - lse);
    total_w += w;
  }
  if (grad) {
    grad->touched[r] = true;
    double* g = grad->values.data() + r * m.vocab_size();
    for (std::size_t v = 0; v < m.vocab_size(); ++v) g[v] += scale * total_w * std::exp(z[v] - lse);
    for (const auto& [id, w] : weights) g[static_cast<std::size_t>(id)] -= scale * w;
  }
  return loss;
}

}  // namespace detail

/// Mean per-position loss of `objective` over a batch, with the gradient of
/// that mean added into `grad` when given.
inline double batch_loss(const ToyLM& model, Objective objective, std::span<const ToyExample* const> batch,
                         ToyGradient* grad = nullptr) {
  std::size_t positions = 0;
  for (const ToyExample* e : batch) {
    const ToyExample& ex = *e;
    if (ex.ids.empty()) throw ValidationError("empty training sequence");
    if (objective == Objective::distribution_matching && ex.targets.size() != ex.ids.size())
      throw LengthMismatch("targets vs token ids", ex.ids.size(), ex.targets.size());
    positions += ex.ids.size();
  }
  if (positions == 0) throw ValidationError("empty batch");
  const double scale = 1.0 / static_cast<double>(positions);
  double total = 0.0;
  for (const ToyExample* e : batch) {
    const ToyExample& ex = *e;
    for (std::size_t t = 0; t < ex.ids.size(); ++t) {
      const std::size_t r = model.context_row(ex.ids, t);
      if (objective == Objective::sample_matching) {
        const std::pair<TokenId, double> one[] = {{ex.ids[t], 1.0}};
        total += detail::position_loss(model, r, one, grad, scale);
      } else {
        total += detail::position_loss(model, r, ex.targets[t].entries(), grad, scale);
      }
    }
  }
  return total * scale;
}

inline double batch_loss(const ToyLM& model, Objective objective, std::span<const ToyExample> batch,
                         ToyGradient* grad = nullptr) {
  std::vector<const ToyExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return batch_loss(model, objective, std::span<const ToyExample* const>(ptrs), grad);
}

/// Mean over positions of -ln p(observed | context).
inline double sample_matching_loss(const ToyLM& model, std::span<const TokenId> ids) {
  if (ids.empty()) throw ValidationError("empty sequence");
  const ToyExample ex{{ids.begin(), ids.end()}, {}};
  return batch_loss(model, Objective::sample_matching, std::span(&ex, 1));
}

/// Mean over positions of -sum_v p_target(v) ln p_student(v), summed over the
/// target support only. Differs from KL(target || student) by a constant.
inline double distribution_matching_loss(const ToyLM& model, const TargetSequence& targets,
                                         std::span<const TokenId> ids) {
  if (targets.targets.size() != ids.size())
    throw LengthMismatch("targets vs token ids", ids.size(), targets.targets.size());
  const ToyExample ex{{ids.begin(), ids.end()}, targets.targets};
  return batch_loss(model, Objective::distribution_matching, std::span(&ex, 1));
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  double analytic_norm = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient of every logit in a touched row with a
/// central difference of step `epsilon`.
inline GradCheckReport grad_check(ToyLM model, Objective objective, std::span<const ToyExample> batch,
                                  double epsilon = 1e-5) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw ValidationError("epsilon must lie in (0, 1e-2]");
  ToyGradient g(model);
  batch_loss(model, objective, batch, &g);
  GradCheckReport rep;
  double sq = 0.0;
  for (std::size_t r = 0; r < model.rows(); ++r) {
    if (!g.touched[r]) continue;
    for (std::size_t v = 0; v < model.vocab_size(); ++v) {
      double& z = model.table()[r * model.vocab_size() + v];
      const double saved = z;
      z = saved + epsilon;
      const double up = batch_loss(model, objective, batch);
      z = saved - epsilon;
      const double down = batch_loss(model, objective, batch);
      z = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = g.values[r * model.vocab_size() + v];
      sq += analytic * analytic;
      rep.max_relative_error = std::max(rep.max_relative_error, relative_error(analytic, numeric));
      ++rep.checked;
    }
  }
  rep.analytic_norm = std::sqrt(sq);
  return rep;
}

/// One plain gradient-descent step; returns the pre-step loss.
inline double sgd_step(ToyLM& model, Objective objective, std::span<const ToyExample* const> batch,
                       double learning_rate) {
  ToyGradient g(model);
  const double loss = batch_loss(model, objective, batch, &g);
  auto& table = model.table();
  for (std::size_t r = 0; r < model.rows(); ++r) {
    if (!g.touched[r]) continue;
    for (std::size_t v = r * model.vocab_size(); v < (r + 1) * model.vocab_size(); ++v)
      table[v] -= learning_rate * g.values[v];
  }
  return loss;
}

inline double sgd_step(ToyLM& model, Objective objective, std::span<const ToyExample> batch, double learning_rate) {
  std::vector<const ToyExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return sgd_step(model, objective, std::span<const ToyExample* const>(ptrs), learning_rate);
}

}  // namespace cotd
