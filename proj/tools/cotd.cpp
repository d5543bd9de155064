// cotd: command-line front end for the distillation-data pipeline.
// Exit codes: 0 success, 1 validation error, 2 I/O or endpoint error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cotd/align.hpp"
#include "cotd/cached_teacher.hpp"
#include "cotd/config.hpp"
#include "cotd/corpus.hpp"
#include "cotd/http_teacher.hpp"
#include "cotd/mock_teacher.hpp"
#include "cotd/pipeline.hpp"
#include "cotd/select.hpp"
#include "cotd/token.hpp"
#include "cotd/toy_train.hpp"

namespace {

using nlohmann::json;
using namespace cotd;

std::set<std::string> split_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

json tokens_json(const TokenSequence& seq) {
  json toks = json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) toks.push_back({{"surface", seq[i].surface}, {"id", seq[i].id}});
  return toks;
}

// ---- tokenize ---------------------------------------------------------------

struct TokenizeArgs {
  std::string vocab = "demo:student";
  std::string text;
  std::string dump_vocab;
};

void add_tokenize(CLI::App& app, TokenizeArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("tokenize", "Encode text with a vocabulary (or write a vocabulary file)");
  c->add_option("--vocab", a.vocab, "Vocabulary file, or demo:teacher / demo:student")->capture_default_str();
  c->add_option("--text", a.text, "Text to encode");
  c->add_option("--dump-vocab", a.dump_vocab, "Write the vocabulary to this path and exit");
  c->callback([&] {
    run = [&] {
      const Vocabulary v = pipeline::load_vocabulary(a.vocab);
      if (!a.dump_vocab.empty()) {
        auto out = open_out(a.dump_vocab);
        v.write(out);
        std::cout << "wrote " << v.size() << " entries to " << a.dump_vocab << '\n';
        return;
      }
      const auto seq = encode(a.text, v);
      std::cout << json{{"vocab", v.name()}, {"tokens", tokens_json(seq)}, {"ids", seq.ids()},
                        {"decoded", decode(seq)}}
                       .dump()
                << '\n';
    };
  });
}

// ---- align ------------------------------------------------------------------

struct AlignArgs {
  std::string teacher_vocab = "demo:teacher";
  std::string student_vocab = "demo:student";
  std::string text;
  std::string solutions;
  std::string out;
};

void add_align(CLI::App& app, AlignArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("align", "Align teacher and student tokenizations");
  c->add_option("--teacher-vocab", a.teacher_vocab, "Teacher vocabulary")->capture_default_str();
  c->add_option("--student-vocab", a.student_vocab, "Student vocabulary")->capture_default_str();
  c->add_option("--text", a.text, "Align one text and print JSON");
  c->add_option("--solutions", a.solutions, "Solutions JSONL to align (with --out)")->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Alignment JSONL output");
  c->callback([&] {
    run = [&] {
      const Vocabulary tv = pipeline::load_vocabulary(a.teacher_vocab);
      const Vocabulary sv = pipeline::load_vocabulary(a.student_vocab);
      if (!a.solutions.empty()) {
        if (a.out.empty()) throw ValidationError("--solutions needs --out");
        const auto rep = pipeline::align_solutions(a.solutions, tv, sv, a.out);
        std::cout << "aligned " << rep.aligned << " solutions (" << rep.skipped << " without step records)\n";
        return;
      }
      const auto t = encode(a.text, tv);
      const auto s = encode(a.text, sv);
      auto j = pipeline::alignment_to_json(align(t, s));
      j["teacher_tokens"] = tokens_json(t);
      j["student_tokens"] = tokens_json(s);
      std::cout << j.dump() << '\n';
    };
  });
}

// ---- transfer ---------------------------------------------------------------

struct TransferArgs {
  std::string teacher_vocab = "demo:teacher";
  std::string student_vocab = "demo:student";
  std::string solutions;
  std::string alignments;
  std::string out;
  bool renormalize = false;
};

void add_transfer(CLI::App& app, TransferArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("transfer", "Map teacher top-k records onto student targets");
  c->add_option("--teacher-vocab", a.teacher_vocab, "Teacher vocabulary")->capture_default_str();
  c->add_option("--student-vocab", a.student_vocab, "Student vocabulary")->capture_default_str();
  c->add_option("--solutions", a.solutions, "Solutions JSONL with step records")->required()->check(CLI::ExistingFile);
  c->add_option("--alignments", a.alignments, "Precomputed alignment JSONL (default: recompute)")
      ->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Target JSONL output")->required();
  c->add_flag("--renormalize", a.renormalize, "Rescale kept probabilities to sum to 1")->capture_default_str();
  c->callback([&] {
    run = [&] {
      const auto rep = pipeline::transfer(
          a.solutions, pipeline::load_vocabulary(a.teacher_vocab), pipeline::load_vocabulary(a.student_vocab),
          {a.renormalize}, a.out,
          a.alignments.empty() ? std::nullopt : std::optional<std::string>(a.alignments));
      std::cout << "sequences " << rep.sequences << " skipped " << rep.skipped << " transferred "
                << rep.tally.transferred << " one_hot " << rep.tally.one_hot << " gold_forced "
                << rep.tally.gold_forced << " gold_unmappable " << rep.tally.gold_unmappable << '\n';
    };
  });
}

// ---- gen --------------------------------------------------------------------

struct GenArgs {
  std::string questions;
  std::size_t synth_questions = 0;
  std::string questions_out;
  std::string out;
  bool mock = false;
  double error_rate = 0.0;
  std::size_t n = kDefaultSamples;
  double temperature = 0.7;
  std::size_t max_tokens = 256;
  std::size_t top_logprobs = 5;
  std::string cache;
  std::size_t in_flight = 4;
  std::uint64_t seed = 0;
};

void add_gen(CLI::App& app, GenArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("gen", "Sample teacher solutions for every question");
  c->add_option("--questions", a.questions, "Questions JSONL {id, question, answer}");
  c->add_option("--synth-questions", a.synth_questions, "Generate this many mock questions instead")
      ->capture_default_str();
  c->add_option("--questions-out", a.questions_out, "Where to write synthesized questions");
  c->add_option("--out", a.out, "Solutions JSONL output")->required();
  c->add_flag("--mock", a.mock, "Use the offline scripted teacher")->capture_default_str();
  c->add_option("--error-rate", a.error_rate, "Mock teacher wrong-answer rate")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c->add_option("--n", a.n, "Samples per question")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--temperature", a.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c->add_option("--max-tokens", a.max_tokens, "Completion length limit")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--top-logprobs", a.top_logprobs, "Top-k log-probabilities per step")
      ->check(CLI::Range(1, 5))
      ->capture_default_str();
  c->add_option("--cache", a.cache, "Response cache directory");
  c->add_option("--in-flight", a.in_flight, "Concurrent teacher requests")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--seed", a.seed, "Seed for mock questions and mock sampling")->capture_default_str();
  c->callback([&] {
    run = [&] {
      std::vector<Question> qs;
      if (a.synth_questions > 0) {
        qs = synthesize_questions(a.synth_questions, derive_seed(a.seed, "questions"));
        if (!a.questions_out.empty()) pipeline::write_questions(qs, a.questions_out);
      } else if (!a.questions.empty()) {
        qs = pipeline::read_questions(a.questions);
      } else {
        throw ValidationError("gen needs --questions or --synth-questions");
      }
      std::unique_ptr<TeacherClient> base;
      if (a.mock) {
        MockTeacherConfig mc;
        mc.error_rate = a.error_rate;
        mc.seed = derive_seed(a.seed, "mock-teacher");
        base = std::make_unique<MockTeacher>(mc);
      } else {
        base = std::make_unique<HttpTeacher>(HttpTeacherConfig::from_env());
      }
      std::unique_ptr<CachedTeacher> cached;
      TeacherClient* client = base.get();
      if (!a.cache.empty()) client = (cached = std::make_unique<CachedTeacher>(*base, a.cache)).get();
      pipeline::GenOptions opt;
      opt.samples = a.n;
      opt.params = {a.max_tokens, a.temperature, a.top_logprobs};
      opt.max_in_flight = a.in_flight;
      const auto count = pipeline::gen(qs, *client, opt, a.out);
      std::cout << "sampled " << count << " solutions for " << qs.size() << " questions";
      if (cached) std::cout << " (" << cached->hits() << " cache hits)";
      std::cout << '\n';
    };
  });
}

// ---- filter -----------------------------------------------------------------

struct FilterArgs {
  std::string solutions;
  std::string out;
  bool dedup = false;
};

void add_filter(CLI::App& app, FilterArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("filter", "Keep solutions whose answer matches the gold answer");
  c->add_option("--solutions", a.solutions, "Solutions JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Kept solutions JSONL")->required();
  c->add_flag("--dedup", a.dedup, "Drop repeated identical solutions")->capture_default_str();
  c->callback([&] {
    run = [&] {
      const auto r = pipeline::filter(a.solutions, a.out, a.dedup);
      std::cout << "kept " << r.kept << " of " << r.total << " solutions; " << r.questions_without_data << " of "
                << r.questions_seen << " questions without data\n";
    };
  });
}

// ---- format -----------------------------------------------------------------

struct FormatArgs {
  std::string questions;
  std::string solutions;
  std::string out;
  std::string formats = "B1,B2,B3,B4";
  std::string mix;
  std::size_t exemplars = kDefaultExemplars;
  std::uint64_t seed = 0;
};

void add_format(CLI::App& app, FormatArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("format", "Render kept solutions into tuning formats B1-B4");
  c->add_option("--questions", a.questions, "Questions JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--solutions", a.solutions, "Kept solutions JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Formatted dataset JSONL")->required();
  c->add_option("--formats", a.formats, "Comma-separated format tags")->capture_default_str();
  c->add_option("--mix", a.mix, "Mix weights TAG=W,... (default: equal)");
  c->add_option("--exemplars", a.exemplars, "In-context exemplars for B1/B2")->capture_default_str();
  c->add_option("--seed", a.seed, "Mixing seed")->capture_default_str();
  c->callback([&] {
    run = [&] {
      pipeline::FormatOptions opt;
      opt.formats.clear();
      for (const auto& t : split_list(a.formats)) opt.formats.push_back(parse_format_tag(t));
      if (opt.formats.empty()) throw ValidationError("--formats names no format");
      if (!a.mix.empty()) opt.ratio = pipeline::parse_ratio(a.mix);
      opt.exemplars = a.exemplars;
      opt.seed = derive_seed(a.seed, "format");
      const auto n = pipeline::format(a.questions, a.solutions, opt, a.out);
      std::cout << "wrote " << n << " instances\n";
    };
  });
}

// ---- split ------------------------------------------------------------------

struct SplitArgs {
  std::string input;
  std::size_t dev_size = kDefaultDevSize;
  std::uint64_t seed = 0;
  std::string group_by;
  std::string dev_out;
  std::string test_out;
};

void add_split(CLI::App& app, SplitArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("split", "Seeded dev/test split of a JSONL file");
  c->add_option("--input", a.input, "JSONL input")->required()->check(CLI::ExistingFile);
  c->add_option("--dev-size", a.dev_size, "Dev items (or groups with --group-by)")->capture_default_str();
  c->add_option("--seed", a.seed, "Split seed")->capture_default_str();
  c->add_option("--group-by", a.group_by, "Keep lines sharing this field on one side");
  c->add_option("--dev-out", a.dev_out, "Dev JSONL output")->required();
  c->add_option("--test-out", a.test_out, "Test JSONL output")->required();
  c->callback([&] {
    run = [&] {
      const auto r = pipeline::split(a.input, a.dev_size, derive_seed(a.seed, "split"),
                                     a.group_by.empty() ? std::nullopt : std::optional<std::string>(a.group_by),
                                     a.dev_out, a.test_out);
      std::cout << "dev " << r.dev << " test " << r.test << '\n';
    };
  });
}

// ---- train-toy --------------------------------------------------------------

struct TrainToyArgs {
  ExperimentConfig cfg;
  std::string teacher = "synthetic";
  std::size_t support = 5;
  double tail_mass = 0.01;
  std::string out_dir = ".";
};

void add_train_toy(CLI::App& app, TrainToyArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("train-toy", "Compare sample and distribution matching on a toy teacher");
  auto& cfg = a.cfg;
  c->add_option("--seeds", cfg.seeds, "Independent seeds")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--seed", cfg.base_seed, "Base seed")->capture_default_str();
  c->add_option("--vocab-size", cfg.vocab_size, "Toy vocabulary size")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--order", cfg.order, "Context length")->capture_default_str();
  c->add_option("--seq-len", cfg.sequence_length, "Tokens per sequence")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--n-train", cfg.n_train, "Training sequences")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--n-heldout", cfg.n_heldout, "Held-out sequences")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--top-k", cfg.top_k, "Teacher truncation")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_flag("--renormalize", cfg.renormalize, "Renormalize truncated targets")->capture_default_str();
  c->add_option("--tau-margin", cfg.tau_margin, "Threshold above teacher held-out NLL")->capture_default_str();
  c->add_option("--lr", cfg.train.learning_rate, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--steps", cfg.train.steps, "Gradient steps")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--batch", cfg.train.batch_size, "Sequences per batch")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--eval-every", cfg.train.eval_every, "Held-out evaluation interval")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--teacher", a.teacher, "synthetic or deterministic")
      ->check(CLI::IsMember({"synthetic", "deterministic"}))
      ->capture_default_str();
  c->add_option("--support", a.support, "Synthetic teacher: high-mass tokens per context")->capture_default_str();
  c->add_option("--tail-mass", a.tail_mass, "Synthetic teacher: mass spread over the other tokens")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c->add_option("--out-dir", a.out_dir, "Directory for curves.csv and summary.json")->capture_default_str();
  c->callback([&] {
    run = [&] {
      const auto teacher =
          a.teacher == "deterministic"
              ? CategoricalTeacher::deterministic(a.cfg.vocab_size, a.cfg.order, a.cfg.base_seed)
              : CategoricalTeacher::synthetic(a.cfg.vocab_size, a.cfg.order, a.cfg.base_seed, a.support,
                                              a.tail_mass);
      const auto r = run_convergence_experiment(teacher, a.cfg);
      std::error_code ec;
      std::filesystem::create_directories(a.out_dir, ec);
      if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());
      auto curves = open_out(a.out_dir + "/curves.csv");
      write_curves_csv(curves, r);
      auto summary = open_out(a.out_dir + "/summary.json");
      summary << summary_json(r).dump(2) << '\n';
      for (const auto& s : r.seeds) {
        auto steps = [](const ArmResult& arm) {
          return arm.steps_to_threshold ? std::to_string(*arm.steps_to_threshold) : std::string("not reached");
        };
        std::printf("seed %zu  tau %.4f  steps sm %s dm %s  final sm %.4f dm %.4f\n", s.seed_index, s.tau,
                    steps(s.sample_matching).c_str(), steps(s.distribution_matching).c_str(),
                    s.sample_matching.final_heldout, s.distribution_matching.final_heldout);
      }
      std::printf("distribution matching not slower in %zu/%zu seeds, not higher in %zu/%zu seeds\n",
                  r.dm_faster_count(), r.seeds.size(), r.dm_lower_count(), r.seeds.size());
    };
  });
}

// ---- grad-check -------------------------------------------------------------

struct GradCheckArgs {
  std::string objective = "both";
  double epsilon = 1e-5;
  double threshold = 1e-5;
  std::uint64_t seed = 0;
  std::size_t vocab_size = 8;
  std::size_t order = 2;
};

void add_grad_check(CLI::App& app, GradCheckArgs& a, std::function<void()>& run, int& exit_code) {
  auto* c = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  c->add_option("--objective", a.objective, "sample_matching, distribution_matching or both")
      ->check(CLI::IsMember({"sample_matching", "distribution_matching", "both"}))
      ->capture_default_str();
  c->add_option("--epsilon", a.epsilon, "Central-difference step")->capture_default_str();
  c->add_option("--threshold", a.threshold, "Largest acceptable relative error")->capture_default_str();
  c->add_option("--seed", a.seed, "Seed for the random model and batch")->capture_default_str();
  c->add_option("--vocab-size", a.vocab_size, "Toy vocabulary size")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--order", a.order, "Context length")->capture_default_str();
  c->callback([&] {
    run = [&] {
      Rng rng(derive_seed(a.seed, "grad-check"));
      ToyLM model(a.vocab_size, a.order);
      for (auto& z : model.table()) z = rng.normal();
      const auto teacher = CategoricalTeacher::synthetic(a.vocab_size, a.order, a.seed);
      std::vector<ToyExample> batch(4);
      for (auto& ex : batch) {
        ex.ids = teacher.sample(12, rng);
        for (std::size_t t = 0; t < ex.ids.size(); ++t) ex.targets.push_back(teacher.truncated_target(ex.ids, t));
      }
      double worst = 0.0;
      for (Objective obj : {Objective::sample_matching, Objective::distribution_matching}) {
        if (a.objective != "both" && a.objective != to_string(obj)) continue;
        const auto rep = grad_check(model, obj, batch, a.epsilon);
        std::printf("%s max_relative_error %.3e over %zu logits\n", to_string(obj).data(),
                    rep.max_relative_error, rep.checked);
        worst = std::max(worst, rep.max_relative_error);
      }
      if (worst >= a.threshold) {
        std::fprintf(stderr, "cotd: gradient check failed: %.3e >= %.3e\n", worst, a.threshold);
        exit_code = 1;
      }
    };
  });
}

// ---- select / report --------------------------------------------------------

struct SelectArgs {
  std::string trace;
  std::string datasets;
};

void add_select(CLI::App& app, SelectArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("select", "Pick the checkpoint with the best mean accuracy on some datasets");
  c->add_option("--trace", a.trace, "Trace CSV step,dataset,accuracy")->required()->check(CLI::ExistingFile);
  c->add_option("--datasets", a.datasets, "Comma-separated selection datasets")->required();
  c->callback([&] {
    run = [&] {
      const auto trace = MetricTrace::load_csv(a.trace);
      const SelectionCriterion crit{split_list(a.datasets)};
      const auto& cp = trace.checkpoints()[select_checkpoint_index(trace, crit)];
      std::cout << "step " << cp.step << " mean " << percent(criterion_score(cp, crit)) << '\n';
    };
  });
}

struct ReportArgs {
  std::string trace;
  std::string in_dist;
  std::string ood;
  std::string format = "text";
  std::string out;
};

void add_report(CLI::App& app, ReportArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("report", "In-distribution vs out-of-distribution selection tradeoff");
  c->add_option("--trace", a.trace, "Trace CSV step,dataset,accuracy")->required()->check(CLI::ExistingFile);
  c->add_option("--in-dist", a.in_dist, "In-distribution dataset")->required();
  c->add_option("--ood", a.ood, "Comma-separated held-out datasets")->required();
  c->add_option("--format", a.format, "text or csv")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  c->add_option("--out", a.out, "Write the report here instead of standard output");
  c->callback([&] {
    run = [&] {
      const auto rep = report_tradeoff(MetricTrace::load_csv(a.trace), a.in_dist, split_list(a.ood));
      std::ostringstream buf;
      if (a.format == "csv") write_tradeoff_csv(rep, buf);
      else write_tradeoff_text(rep, buf);
      if (a.out.empty()) {
        std::cout << buf.str();
      } else {
        auto out = open_out(a.out);
        out << buf.str();
      }
    };
  });
}

// Expands `--config FILE` into `--key=value` arguments placed right after
// the subcommand name, so later command-line flags override them.
std::vector<std::string> expand_config(CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::size_t sub_at = 0;
  CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size() && !sub; ++i)
    if ((sub = app.get_subcommand_no_throw(args[i]))) sub_at = i;
  if (!sub) return args;
  std::string path;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::set<std::string> known;
  for (const auto* s : app.get_subcommands({}))
    for (const auto* o : s->get_options()) known.insert(o->get_name(false, true));
  std::vector<std::string> injected;
  for (const auto& e : load_config(path)) {
    if (!known.contains("--" + e.key) || e.key == "config")
      throw ValidationError(path + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    if (!e.scope.empty() && e.scope != sub->get_name()) continue;
    if (sub->get_option_no_throw("--" + e.key)) injected.push_back("--" + e.key + "=" + e.value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain-of-thought distillation data toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::function<void()> run;
  int exit_code = 0;
  TokenizeArgs tokenize;
  AlignArgs align_args;
  TransferArgs transfer_args;
  GenArgs gen;
  FilterArgs filter;
  FormatArgs format;
  SplitArgs split;
  TrainToyArgs train_toy;
  GradCheckArgs grad;
  SelectArgs select;
  ReportArgs report;
  add_tokenize(app, tokenize, run);
  add_align(app, align_args, run);
  add_transfer(app, transfer_args, run);
  add_gen(app, gen, run);
  add_filter(app, filter, run);
  add_format(app, format, run);
  add_split(app, split, run);
  add_train_toy(app, train_toy, run);
  add_grad_check(app, grad, run, exit_code);
  add_select(app, select, run);
  add_report(app, report, run);

  std::string config;
  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--config", config, "Flat key = value file; command-line flags win")
        ->check(CLI::ExistingFile);

  try {
    auto args = expand_config(app, argc, argv);
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }
    if (run) run();
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "cotd: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "cotd: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cotd: %s\n", e.what());
    return 1;
  }
  return exit_code;
}
