#include "irvuln/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <ostream>
#include <stdexcept>
#include <string>

#include "irvuln/error.hpp"
#include "irvuln/rng.hpp"

namespace irvuln {

namespace {

constexpr std::uint64_t kSplitStreamSalt = 0x53504c4954000000ULL;

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

RunResult run_once(const Split& split, const Vocabulary& vocab, const ExperimentConfig& config,
                   std::size_t run) {
  ModelConfig mc = config.model;
  mc.seed = config.model.seed ^ static_cast<std::uint64_t>(run);
  const auto s1 = train_stage1(split.train, vocab, mc);
  const auto s2 = train_stage2(split.train, vocab, s1.model, mc);

  RunResult out;
  out.run = run;
  out.seed = mc.seed;
  out.counts = evaluate_models(s1.model, s2.model, vocab, split.test, mc.decision_threshold);
  out.code = metrics(out.counts.code);
  out.line = metrics(out.counts.line);
  return out;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i])
      ++(actual[i] ? c.tp : c.fp);
    else
      ++(actual[i] ? c.fn : c.tn);
  }
  return c;
}

MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport m;
  m.accuracy = ratio(c.tp + c.tn, c.total(), m.undefined.accuracy);
  m.precision = ratio(c.tp, c.tp + c.fp, m.undefined.precision);
  m.recall = ratio(c.tp, c.tp + c.fn, m.undefined.recall);
  m.fpr = ratio(c.fp, c.fp + c.tn, m.undefined.fpr);
  m.fnr = ratio(c.fn, c.fn + c.tp, m.undefined.fnr);
  if (m.undefined.precision || m.undefined.recall || m.precision + m.recall == 0.0) {
    m.undefined.f1 = true;
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

Split stratified_split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("stratified_split: train_fraction must lie in (0, 1)");
  SplitMix64 rng(seed ^ kSplitStreamSalt);
  std::vector<bool> in_train(corpus.programs.size(), false);
  for (const int label : {1, 0}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.programs.size(); ++i)
      if (corpus.programs[i].label == label) members.push_back(i);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(members.size())));
    if (n_train == 0 || n_train >= members.size())
      throw DataError("corpus too small to stratify (label " + std::to_string(label) + " has " +
                      std::to_string(members.size()) + " programs)");
    partial_shuffle(std::span<std::size_t>(members), n_train, rng);
    for (std::size_t k = 0; k < n_train; ++k) in_train[members[k]] = true;
  }
  Split split;
  split.train.provenance = corpus.provenance + " [train]";
  split.test.provenance = corpus.provenance + " [test]";
  for (std::size_t i = 0; i < corpus.programs.size(); ++i)
    (in_train[i] ? split.train : split.test).programs.push_back(corpus.programs[i]);
  return split;
}

Evaluation evaluate_models(const Stage1Model& stage1, const Stage2Model& stage2,
                           const Vocabulary& vocab, const Corpus& corpus, double threshold) {
  Evaluation e;
  std::vector<bool> code_pred, code_true;
  for (const auto& program : corpus.programs) {
    const auto p = predict(stage1, stage2, vocab, program, threshold);
    code_pred.push_back(p.code_vulnerable);
    code_true.push_back(program.label == 1);
    if (program.label != 1) continue;
    std::vector<bool> line_true(program.lines.size());
    for (std::size_t t = 0; t < line_true.size(); ++t) line_true[t] = program.line_label(t);
    e.line += confusion(p.line_flags, line_true);
  }
  e.code = confusion(code_pred, code_true);
  return e;
}

std::vector<RunResult> run_experiment(const Corpus& corpus, const ExperimentConfig& config) {
  if (config.repeats == 0) throw std::invalid_argument("run_experiment: repeats must be positive");
  config.model.validate();
  const Split split = stratified_split(corpus, config.train_fraction, config.model.seed);
  const Vocabulary vocab = build_vocabulary(config.vocab_from_all ? corpus : split.train);

  std::vector<RunResult> results(config.repeats);
  const std::size_t jobs = std::max<std::size_t>(1, config.jobs);
  for (std::size_t start = 0; start < config.repeats; start += jobs) {
    const std::size_t end = std::min(config.repeats, start + jobs);
    if (jobs == 1) {
      results[start] = run_once(split, vocab, config, start);
      continue;
    }
    std::vector<std::future<RunResult>> pending;
    for (std::size_t r = start; r < end; ++r)
      pending.push_back(std::async(std::launch::async, run_once, std::cref(split),
                                   std::cref(vocab), std::cref(config), r));
    for (std::size_t r = start; r < end; ++r) results[r] = pending[r - start].get();
  }
  return results;
}

void write_report_csv(const std::vector<RunResult>& runs, std::ostream& out) {
  out << "run,split,acc,precision,recall,f1,fpr,fnr,scope\n";
  for (const auto& r : runs) {
    for (const auto& [m, scope] : {std::pair{&r.code, "code"}, std::pair{&r.line, "line"}}) {
      out << r.run << ",test," << pct(m->accuracy) << ',' << pct(m->precision) << ','
          << pct(m->recall) << ',' << pct(m->f1) << ',' << pct(m->fpr) << ',' << pct(m->fnr)
          << ',' << scope << '\n';
    }
  }
}

void print_report_table(const std::vector<RunResult>& runs, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-5s %8s %8s %8s %8s %8s %8s\n", "run", "scope", "acc%",
                "prec%", "recall%", "f1%", "fpr%", "fnr%");
  out << buf;
  for (const auto& r : runs) {
    for (const auto& [m, scope] : {std::pair{&r.code, "code"}, std::pair{&r.line, "line"}}) {
      std::snprintf(buf, sizeof buf, "%-4zu %-5s %8s %8s %8s %8s %8s %8s\n", r.run, scope,
                    pct(m->accuracy).c_str(), pct(m->precision).c_str(), pct(m->recall).c_str(),
                    pct(m->f1).c_str(), pct(m->fpr).c_str(), pct(m->fnr).c_str());
      out << buf;
    }
  }
}

}  // namespace irvuln
