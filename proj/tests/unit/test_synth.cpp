#include "doctest.h"
#include "support.hpp"

#include <set>
#include <sstream>

#include "irvuln/eval.hpp"
#include "irvuln/synth.hpp"
#include "irvuln/vocab.hpp"

using irvuln::SynthConfig;

namespace {

std::string jsonl(const irvuln::Corpus& c) {
  std::ostringstream out;
  irvuln::write_corpus(c, out);
  return out.str();
}

std::string operand(std::string token) {
  while (!token.empty() && (token.back() == ',' || token.back() == ')')) token.pop_back();
  return token;
}

// Register-level taint tracking written independently of the generator.
std::vector<std::size_t> oracle_tainted_sinks(const irvuln::Program& p) {
  std::set<std::string> tainted;
  std::vector<std::size_t> sinks;
  for (std::size_t t = 0; t < p.lines.size(); ++t) {
    std::istringstream words(p.lines[t]);
    std::vector<std::string> toks;
    for (std::string w; words >> w;) toks.push_back(w);
    const bool defines = toks.size() > 2 && toks[1] == "=";
    bool reads_taint = false, source = false, sink = false;
    for (std::size_t k = defines ? 2 : 0; k < toks.size(); ++k) {
      if (toks[k] == "@read_untrusted()") source = true;
      if (toks[k] == "@copy_unbounded(i8*") sink = true;
      if (sink && toks[k] == "@read_untrusted(),") reads_taint = true;  // source call as the operand
      if (tainted.count(operand(toks[k]))) reads_taint = true;
    }
    if (defines && (source || reads_taint)) tainted.insert(toks[0]);
    if (sink && reads_taint) sinks.push_back(t);
  }
  return sinks;
}

}  // namespace

TEST_CASE("default corpus shape") {
  const auto c = irvuln::generate_corpus(SynthConfig{});
  REQUIRE(c.programs.size() == 2000);
  std::size_t vulnerable = 0;
  std::set<std::string> ids;
  for (const auto& p : c.programs) {
    vulnerable += p.label;
    ids.insert(p.id);
    CHECK(p.lines.size() >= 8);
    CHECK(p.lines.size() <= 60);
  }
  CHECK(vulnerable == 600);
  CHECK(ids.size() == 2000);
  irvuln::validate_corpus(c);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig cfg;
  cfg.program_count = 300;
  const auto a = jsonl(irvuln::generate_corpus(cfg));
  CHECK(a == jsonl(irvuln::generate_corpus(cfg)));
  cfg.seed = 43;
  CHECK(a != jsonl(irvuln::generate_corpus(cfg)));
}

TEST_CASE("labels agree with an independent taint scan") {
  for (std::size_t span : {1, 2, 3, 5}) {
    SynthConfig cfg;
    cfg.motif_span = span;
    cfg.program_count = span == 3 ? 2000 : 300;
    const auto c = irvuln::generate_corpus(cfg);
    std::vector<bool> predicted, actual;
    for (const auto& p : c.programs) {
      const auto sinks = oracle_tainted_sinks(p);
      CHECK(sinks == p.vulnerable_lines);
      CHECK(irvuln::scan_taint(p).tainted_sinks == sinks);
      predicted.push_back(!sinks.empty());
      actual.push_back(p.label == 1);
    }
    const auto m = irvuln::metrics(irvuln::confusion(predicted, actual));
    CHECK(m.f1 == 1.0);
  }
}

TEST_CASE("clean programs include every decoy kind") {
  const auto c = irvuln::generate_corpus(SynthConfig{});
  std::size_t source_only = 0, sink_only = 0, both = 0, neither = 0;
  for (const auto& p : c.programs) {
    if (p.label) continue;
    const auto s = irvuln::scan_taint(p);
    if (s.has_source && s.has_sink) ++both;
    else if (s.has_source) ++source_only;
    else if (s.has_sink) ++sink_only;
    else ++neither;
  }
  CHECK(source_only > 0);
  CHECK(sink_only > 0);
  CHECK(both > 0);  // sink before an unrelated source
  CHECK(neither > 0);
}

TEST_CASE("preprocessing leaves generated corpora intact") {
  SynthConfig cfg;
  cfg.program_count = 500;
  const auto base = irvuln::generate_corpus(cfg);
  CHECK(irvuln::prepare_corpus(base).programs == base.programs);

  cfg.with_user_functions = true;
  const auto injected = irvuln::generate_corpus(cfg);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < base.programs.size(); ++i)
    changed += injected.programs[i].lines != base.programs[i].lines;
  CHECK(changed > 100);
  CHECK(irvuln::prepare_corpus(injected).programs == base.programs);
}

TEST_CASE("vocabulary size tracks the token pool") {
  SynthConfig small;
  small.program_count = 400;
  small.token_pool_size = 40;
  SynthConfig large = small;
  large.token_pool_size = 800;
  CHECK(irvuln::build_vocabulary(irvuln::generate_corpus(small)).size() <
        irvuln::build_vocabulary(irvuln::generate_corpus(large)).size());
}

TEST_CASE("infeasible configurations") {
  SynthConfig c;
  c.max_lines = 265;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.vulnerable_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.min_lines = 3;
  c.motif_span = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.min_lines = 70;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
