#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cotd/answer.hpp"
#include "cotd/error.hpp"

namespace cotd {

struct EvalRecord {
  std::string dataset;
  std::vector<std::string> predictions;
  std::vector<std::string> golds;
};

/// Exact-match accuracy under the shared answer normalization.
inline double accuracy(const EvalRecord& r) {
  if (r.predictions.size() != r.golds.size())
    throw LengthMismatch("predictions vs golds", r.golds.size(), r.predictions.size());
  if (r.golds.empty()) throw EmptyRecord();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r.golds.size(); ++i) hits += answers_match(r.predictions[i], r.golds[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(r.golds.size());
}

struct Checkpoint {
  std::uint64_t step = 0;
  std::map<std::string, double> accuracies;

  bool operator==(const Checkpoint&) const = default;
};

/// Per-checkpoint accuracies; steps strictly increase and every checkpoint
/// reports the same datasets.
class MetricTrace {
public:
  MetricTrace() = default;
  explicit MetricTrace(std::vector<Checkpoint> checkpoints) : checkpoints_(std::move(checkpoints)) { validate(); }

  const std::vector<Checkpoint>& checkpoints() const noexcept { return checkpoints_; }
  bool empty() const noexcept { return checkpoints_.empty(); }

  std::set<std::string> datasets() const {
    std::set<std::string> out;
    if (!checkpoints_.empty())
      for (const auto& [name, acc] : checkpoints_.front().accuracies) out.insert(name);
    return out;
  }

  /// CSV `step,dataset,accuracy` with a header line; rows may come in any
  /// order.
  static MetricTrace parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("trace: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "step,dataset,accuracy") throw ValidationError("trace: expected header 'step,dataset,accuracy'");
    std::map<std::uint64_t, std::map<std::string, double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto c1 = line.find(',');
      const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
      if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
        throw ValidationError("trace line " + std::to_string(lineno) + ": expected 3 fields");
      const std::string step_s = line.substr(0, c1);
      const std::string name = line.substr(c1 + 1, c2 - c1 - 1);
      const std::string acc_s = line.substr(c2 + 1);
      std::uint64_t step = 0;
      double acc = 0.0;
      try {
        std::size_t used = 0;
        if (step_s.empty() || step_s[0] == '-') throw std::invalid_argument("negative");
        step = std::stoull(step_s, &used);
        if (used != step_s.size()) throw std::invalid_argument("trailing");
        acc = std::stod(acc_s, &used);
        if (used != acc_s.size()) throw std::invalid_argument("trailing");
      } catch (const std::logic_error&) {
        throw ValidationError("trace line " + std::to_string(lineno) + ": malformed number");
      }
      if (name.empty()) throw ValidationError("trace line " + std::to_string(lineno) + ": empty dataset");
      if (!rows[step].emplace(name, acc).second)
        throw ValidationError("trace line " + std::to_string(lineno) + ": duplicate (step, dataset)");
    }
    std::vector<Checkpoint> cps;
    for (auto& [step, accs] : rows) cps.push_back({step, std::move(accs)});
    return MetricTrace(std::move(cps));
  }

  static MetricTrace load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_csv(in);
  }

  void write_csv(std::ostream& out) const {
    out << "step,dataset,accuracy\n";
    char buf[32];
    for (const auto& cp : checkpoints_)
      for (const auto& [name, acc] : cp.accuracies) {
        std::snprintf(buf, sizeof buf, "%.17g", acc);
        out << cp.step << ',' << name << ',' << buf << '\n';
      }
  }

private:
  void validate() const {
    for (std::size_t i = 0; i < checkpoints_.size(); ++i) {
      const auto& cp = checkpoints_[i];
      if (i > 0 && cp.step <= checkpoints_[i - 1].step) throw InvariantViolation("trace steps must strictly increase");
      if (cp.accuracies.empty()) throw InvariantViolation("checkpoint without datasets");
      for (const auto& [name, acc] : cp.accuracies)
        if (!(acc >= 0.0 && acc <= 1.0))
          throw InvariantViolation("accuracy for " + name + " at step " + std::to_string(cp.step) +
                                   " is outside [0, 1]");
      if (i > 0) {
        const auto& first = checkpoints_.front().accuracies;
        bool same = first.size() == cp.accuracies.size();
        for (auto a = first.begin(), b = cp.accuracies.begin(); same && a != first.end(); ++a, ++b)
          same = a->first == b->first;
        if (!same)
          throw InvariantViolation("checkpoint " + std::to_string(cp.step) + " reports a different dataset set");
      }
    }
  }

  std::vector<Checkpoint> checkpoints_;
};

/// Datasets whose unweighted mean accuracy is maximized.
struct SelectionCriterion {
  std::set<std::string> datasets;
};

inline double criterion_score(const Checkpoint& cp, const SelectionCriterion& c) {
  double sum = 0.0;
  for (const auto& d : c.datasets) {
    const auto it = cp.accuracies.find(d);
    if (it == cp.accuracies.end()) throw UnknownDataset(d);
    sum += it->second;
  }
  return sum / static_cast<double>(c.datasets.size());
}

inline void check_criterion(const MetricTrace& trace, const SelectionCriterion& c) {
  if (trace.empty()) throw ValidationError("empty trace");
  if (c.datasets.empty()) throw ValidationError("selection criterion names no dataset");
  const auto known = trace.datasets();
  for (const auto& d : c.datasets)
    if (!known.contains(d)) throw UnknownDataset(d);
}

/// Index of the checkpoint maximizing the criterion; the earliest wins ties.
inline std::size_t select_checkpoint_index(const MetricTrace& trace, const SelectionCriterion& c) {
  check_criterion(trace, c);
  const auto& cps = trace.checkpoints();
  std::size_t best = 0;
  double best_score = criterion_score(cps[0], c);
  for (std::size_t i = 1; i < cps.size(); ++i) {
    const double s = criterion_score(cps[i], c);
    if (s > best_score) best = i, best_score = s;
  }
  return best;
}

inline std::uint64_t select_checkpoint(const MetricTrace& trace, const SelectionCriterion& c) {
  return trace.checkpoints()[select_checkpoint_index(trace, c)].step;
}

struct TradeoffRow {
  std::string criterion;  // "in-dist" or "ood"
  std::uint64_t step = 0;
  double in_dist = 0.0;
  double ood_mean = 0.0;
  double delta_in_dist = 0.0;  // against the in-dist-selected row
  double delta_ood = 0.0;
};

struct TradeoffReport {
  std::string in_dist_dataset;
  std::vector<std::string> ood_datasets;
  TradeoffRow by_in_dist;
  TradeoffRow by_ood;
};

inline TradeoffReport report_tradeoff(const MetricTrace& trace, const std::string& in_dist,
                                      const std::set<std::string>& ood) {
  const SelectionCriterion in_c{{in_dist}};
  const SelectionCriterion ood_c{ood};
  const auto& cps = trace.checkpoints();
  const auto& a = cps[select_checkpoint_index(trace, in_c)];
  const auto& b = cps[select_checkpoint_index(trace, ood_c)];
  TradeoffReport rep;
  rep.in_dist_dataset = in_dist;
  rep.ood_datasets.assign(ood.begin(), ood.end());
  rep.by_in_dist = {"in-dist", a.step, criterion_score(a, in_c), criterion_score(a, ood_c), 0.0, 0.0};
  rep.by_ood = {"ood", b.step, criterion_score(b, in_c), criterion_score(b, ood_c), 0.0, 0.0};
  rep.by_ood.delta_in_dist = rep.by_ood.in_dist - rep.by_in_dist.in_dist;
  rep.by_ood.delta_ood = rep.by_ood.ood_mean - rep.by_in_dist.ood_mean;
  return rep;
}

/// Accuracy in percentage points with one decimal, e.g. 23.8 or -2.6.
inline std::string percent(double acc, bool signed_ = false) {
  double v = std::round(acc * 1000.0) / 10.0;
  if (v == 0.0) v = 0.0;  // no "-0.0"
  char buf[32];
  std::snprintf(buf, sizeof buf, signed_ ? "%+.1f" : "%.1f", v);
  return buf;
}

/// CSV: criterion,step,in_dist,ood_mean,delta_in_dist,delta_ood (fractions).
inline void write_tradeoff_csv(const TradeoffReport& r, std::ostream& out) {
  out << "criterion,step,in_dist,ood_mean,delta_in_dist,delta_ood\n";
  char buf[160];
  for (const auto* row : {&r.by_in_dist, &r.by_ood}) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.17g,%.17g,%.17g,%.17g\n", row->criterion.c_str(),
                  static_cast<unsigned long long>(row->step), row->in_dist, row->ood_mean, row->delta_in_dist,
                  row->delta_ood);
    out << buf;
  }
}

/// Aligned plain-text table in percentage points.
inline void write_tradeoff_text(const TradeoffReport& r, std::ostream& out) {
  std::string ood_name;
  for (const auto& d : r.ood_datasets) ood_name += (ood_name.empty() ? "" : "+") + d;
  const std::string in_head = r.in_dist_dataset;
  const std::string ood_head = "mean(" + ood_name + ")";
  auto cell = [](double v, double d, bool with_delta) {
    return percent(v) + (with_delta ? " " + percent(d, true) : "");
  };
  std::vector<std::vector<std::string>> rows = {{"selected by", "step", in_head, ood_head}};
  rows.push_back({"in-dist", std::to_string(r.by_in_dist.step), cell(r.by_in_dist.in_dist, 0, false),
                  cell(r.by_in_dist.ood_mean, 0, false)});
  rows.push_back({"ood", std::to_string(r.by_ood.step), cell(r.by_ood.in_dist, r.by_ood.delta_in_dist, true),
                  cell(r.by_ood.ood_mean, r.by_ood.delta_ood, true)});
  std::vector<std::size_t> width(4, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::string v = row[c];
      if (c + 1 < row.size()) v.resize(width[c], ' ');
      line += v;
      if (c + 1 < row.size()) line += "  ";
    }
    out << line << '\n';
  }
}

}  // namespace cotd
