#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "irvuln/corpus.hpp"
#include "irvuln/detector.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln {

/// Positive class = vulnerable.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual);

/// Ratios in [0, 1]. A 0/0 ratio is reported as 0 with its `undefined` flag set.
struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, fpr = 0, fnr = 0;
  struct {
    bool accuracy = false, precision = false, recall = false, f1 = false, fpr = false, fnr = false;
  } undefined;
};

MetricsReport metrics(const ConfusionCounts& counts);

struct Split {
  Corpus train;
  Corpus test;
};

/// Per-label split; `train_fraction` of each class (rounded) goes to train.
/// Both sides keep corpus order. Throws DataError when either class cannot
/// contribute to both sides.
Split stratified_split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

struct Evaluation {
  ConfusionCounts code;  // every program
  ConfusionCounts line;  // lines of programs labeled vulnerable only
};

/// Runs hierarchical prediction on every program of `corpus`.
Evaluation evaluate_models(const Stage1Model& stage1, const Stage2Model& stage2,
                           const Vocabulary& vocab, const Corpus& corpus, double threshold);

struct ExperimentConfig {
  ModelConfig model;
  std::size_t repeats = 5;
  double train_fraction = 0.8;
  bool vocab_from_all = false;  // default: training split only
  std::size_t jobs = 1;
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  Evaluation counts;
  MetricsReport code;
  MetricsReport line;
};

/// The split is drawn once from the master seed; run r trains both stages
/// with seed ^ r and is scored on the whole held-out split. `corpus` is
/// expected to be prepared.
std::vector<RunResult> run_experiment(const Corpus& corpus, const ExperimentConfig& config);

/// Header `run,split,acc,precision,recall,f1,fpr,fnr,scope`; values are
/// percentages with two decimals, one code row then one line row per run.
void write_report_csv(const std::vector<RunResult>& runs, std::ostream& out);
void print_report_table(const std::vector<RunResult>& runs, std::ostream& out);

}  // namespace irvuln
