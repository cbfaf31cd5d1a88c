#include "doctest.h"
#include "support.hpp"

#include <set>
#include <sstream>

#include "irvuln/error.hpp"
#include "irvuln/eval.hpp"
#include "irvuln/synth.hpp"

using irvuln::ConfusionCounts;
using B = std::vector<bool>;

TEST_CASE("confusion examples") {
  CHECK(irvuln::confusion(B{true, false}, B{true, false}) == ConfusionCounts{1, 0, 0, 1});
  CHECK(irvuln::confusion(B{true}, B{false}) == ConfusionCounts{0, 1, 0, 0});
  CHECK(irvuln::confusion(B{}, B{}) == ConfusionCounts{});
  CHECK(irvuln::confusion(B{false}, B{true}) == ConfusionCounts{0, 0, 1, 0});
  CHECK_THROWS(irvuln::confusion(B{true}, B{}));
}

TEST_CASE("metrics examples") {
  const auto m = irvuln::metrics({1, 0, 0, 1});
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.fpr == 0.0);
  CHECK(m.fnr == 0.0);
  CHECK_FALSE(m.undefined.precision);

  const auto none = irvuln::metrics({0, 0, 3, 5});
  CHECK(none.undefined.precision);
  CHECK(none.precision == 0.0);
  CHECK_FALSE(none.undefined.recall);
  CHECK(none.recall == 0.0);
  CHECK(none.undefined.f1);

  const auto empty = irvuln::metrics({});
  CHECK(empty.undefined.accuracy);
  CHECK(empty.undefined.fpr);
  CHECK(empty.undefined.fnr);

  // tp=6 fp=2 fn=3 tn=9
  const auto r = irvuln::metrics({6, 2, 3, 9});
  CHECK(r.accuracy == doctest::Approx(15.0 / 20));
  CHECK(r.precision == doctest::Approx(6.0 / 8));
  CHECK(r.recall == doctest::Approx(6.0 / 9));
  CHECK(r.f1 == doctest::Approx(12.0 / 17));
  CHECK(r.fpr == doctest::Approx(2.0 / 11));
  CHECK(r.fnr == doctest::Approx(3.0 / 9));
}

TEST_CASE("metrics agree with a brute-force recount") {
  irvuln::SplitMix64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    B pred(n), actual(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.below(2);
      actual[i] = rng.below(3) == 0;
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] && actual[i]) tp += 1;
      if (pred[i] && !actual[i]) fp += 1;
      if (!pred[i] && actual[i]) fn += 1;
      if (!pred[i] && !actual[i]) tn += 1;
    }
    const auto m = irvuln::metrics(irvuln::confusion(pred, actual));
    CHECK(m.accuracy == (tp + tn) / n);
    if (fp + tn > 0) CHECK(m.fpr == fp / (fp + tn));
    else CHECK(m.undefined.fpr);
    if (fn + tp > 0) CHECK(m.fnr == fn / (fn + tp));
    else CHECK(m.undefined.fnr);
    if (!m.undefined.f1) {
      const double p = tp / (tp + fp), r = tp / (tp + fn);
      CHECK(m.f1 == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-14));
    }
    CHECK(irvuln::metrics(irvuln::confusion(actual, actual)).accuracy == 1.0);
  }
}

TEST_CASE("stratified split") {
  irvuln::SynthConfig cfg;
  cfg.program_count = 100;
  const auto corpus = irvuln::generate_corpus(cfg);
  const auto a = irvuln::stratified_split(corpus, 0.8, 5);
  const auto b = irvuln::stratified_split(corpus, 0.8, 5);
  CHECK(a.train.programs == b.train.programs);
  CHECK(a.train.programs.size() == 80);
  CHECK(a.test.programs.size() == 20);
  std::size_t train_pos = 0, test_pos = 0;
  std::set<std::string> ids;
  for (const auto& p : a.train.programs) train_pos += p.label, ids.insert(p.id);
  for (const auto& p : a.test.programs) test_pos += p.label, ids.insert(p.id);
  CHECK(train_pos == 24);
  CHECK(test_pos == 6);
  CHECK(ids.size() == 100);
  CHECK_FALSE(irvuln::stratified_split(corpus, 0.8, 6).test.programs ==
              a.test.programs);

  irvuln::Corpus tiny;
  tiny.programs.push_back(testing::make_program("a", {"x"}, {0}));
  tiny.programs.push_back(testing::make_program("b", {"x"}));
  CHECK_THROWS_AS(irvuln::stratified_split(tiny, 0.8, 1), irvuln::DataError);
}

TEST_CASE("line metrics only cover vulnerable programs") {
  const auto c = testing::tiny_config();
  const irvuln::Vocabulary vocab({"a", "b"});
  auto s1 = irvuln::Stage1Model::zeros(2, c);
  auto s2 = irvuln::Stage2Model::zeros(2, c);
  s1.vocab_digest = s2.vocab_digest = vocab.digest();
  irvuln::Corpus corpus;
  corpus.programs.push_back(testing::make_program("clean", {"a", "b", "a b"}));
  corpus.programs.push_back(testing::make_program("vuln", {"a", "b"}, {1}));
  // zero models flag everything
  const auto e = irvuln::evaluate_models(s1, s2, vocab, corpus, 0.5);
  CHECK(e.code == ConfusionCounts{1, 1, 0, 0});
  CHECK(e.line == ConfusionCounts{1, 1, 0, 0});
}

TEST_CASE("run_experiment protocol") {
  irvuln::SynthConfig scfg;
  scfg.program_count = 60;
  const auto corpus = irvuln::generate_corpus(scfg);
  irvuln::ExperimentConfig cfg;
  cfg.model = testing::tiny_config();
  cfg.model.stage1_epochs = 2;
  cfg.model.stage2_epochs = 2;
  const auto runs = irvuln::run_experiment(corpus, cfg);
  REQUIRE(runs.size() == 5);
  std::set<std::uint64_t> seeds;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    CHECK(runs[r].run == r);
    CHECK(runs[r].seed == (cfg.model.seed ^ r));
    seeds.insert(runs[r].seed);
    CHECK(runs[r].counts.code.total() == 12);
  }
  CHECK(seeds.size() == 5);

  std::ostringstream csv1, csv2;
  irvuln::write_report_csv(runs, csv1);
  auto parallel = cfg;
  parallel.jobs = 3;
  irvuln::write_report_csv(irvuln::run_experiment(corpus, parallel), csv2);
  CHECK(csv1.str() == csv2.str());

  std::istringstream lines(csv1.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "run,split,acc,precision,recall,f1,fpr,fnr,scope");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.rfind(std::to_string((rows - 1) / 2) + ",test,", 0) == 0);
    CHECK(line.substr(line.size() - 5) == (rows % 2 ? ",code" : ",line"));
  }
  CHECK(rows == 10);

  std::ostringstream table;
  irvuln::print_report_table(runs, table);
  CHECK(table.str().find("code") != std::string::npos);
}

TEST_CASE("csv formatting") {
  irvuln::RunResult r;
  r.code = irvuln::metrics({6, 2, 3, 9});
  r.line = irvuln::metrics({0, 0, 0, 4});
  std::ostringstream out;
  irvuln::write_report_csv({r}, out);
  CHECK(out.str() ==
        "run,split,acc,precision,recall,f1,fpr,fnr,scope\n"
        "0,test,75.00,75.00,66.67,70.59,18.18,33.33,code\n"
        "0,test,100.00,0.00,0.00,0.00,0.00,0.00,line\n");
}
