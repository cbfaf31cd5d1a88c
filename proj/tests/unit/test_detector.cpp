#include "doctest.h"
#include "support.hpp"

#include "irvuln/detector.hpp"
#include "irvuln/error.hpp"
#include "irvuln/gradcheck.hpp"
#include "irvuln/synth.hpp"

#include <limits>

namespace nn = irvuln::nn;
using irvuln::BowVector;
using irvuln::ModelConfig;
using irvuln::SplitMix64;
using irvuln::Stage1Model;
using irvuln::Stage2Model;
using nn::Vector;

namespace {

Vector densify(const BowVector& x) {
  Vector d(x.dimension, 0.0);
  for (auto j : x.on_indices) d[j] = 1.0;
  return d;
}

// Everything below rebuilds the forward passes from nncore primitives only.
Vector encode_oracle(const Stage1Model& m, const BowVector& x) {
  return nn::relu(nn::dense_forward(m.encoder_out, nn::relu(nn::dense_forward(m.encoder_in, densify(x)))));
}

struct OracleOut {
  std::array<double, 2> logits;
  std::vector<Vector> hf, hb;
};

OracleOut stage1_oracle(const Stage1Model& m, const std::vector<BowVector>& lines) {
  std::vector<Vector> seq;
  for (const auto& x : lines) seq.push_back(encode_oracle(m, x));
  OracleOut out;
  for (const auto& layer : m.blstm) {
    const std::size_t hd = layer.forward.hidden_dim, len = seq.size();
    out.hf.assign(len, Vector());
    out.hb.assign(len, Vector());
    Vector h(hd), c(hd);
    for (std::size_t t = 0; t < len; ++t) {
      auto s = nn::lstm_step(layer.forward, seq[t], h, c);
      h = s.h, c = s.c, out.hf[t] = h;
    }
    h.assign(hd, 0.0), c.assign(hd, 0.0);
    for (std::size_t t = len; t-- > 0;) {
      auto s = nn::lstm_step(layer.backward, seq[t], h, c);
      h = s.h, c = s.c, out.hb[t] = h;
    }
    for (std::size_t t = 0; t < len; ++t) {
      seq[t] = out.hf[t];
      seq[t].insert(seq[t].end(), out.hb[t].begin(), out.hb[t].end());
    }
  }
  Vector latent = out.hf.back();
  latent.insert(latent.end(), out.hb.front().begin(), out.hb.front().end());
  const auto z = nn::dense_forward(m.code_out, nn::relu(nn::dense_forward(m.code_hidden, latent)));
  out.logits = {z[0], z[1]};
  return out;
}

std::array<double, 2> stage2_oracle(const Stage2Model& m, const nn::BlstmOutput& ctx, std::size_t t,
                                    const BowVector& x) {
  Vector in = ctx.forward_states[t];
  in.insert(in.end(), ctx.backward_states[t].begin(), ctx.backward_states[t].end());
  const auto dx = densify(x);
  in.insert(in.end(), dx.begin(), dx.end());
  const auto z = nn::dense_forward(m.line_out, nn::relu(nn::dense_forward(m.line_hidden, in)));
  return {z[0], z[1]};
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

irvuln::Corpus mini_corpus(std::size_t n, std::uint64_t seed) {
  irvuln::SynthConfig cfg;
  cfg.program_count = n;
  cfg.vulnerable_fraction = 0.5;
  cfg.seed = seed;
  return irvuln::generate_corpus(cfg);
}

}  // namespace

TEST_CASE("ModelConfig validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.embed_dim = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.decision_threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.clip_norm = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.cell_clip = -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.cell_clip = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("encode_line examples") {
  ModelConfig c = testing::tiny_config();
  c.embed_dim = 1;
  auto m = Stage1Model::zeros(2, c);
  m.encoder_in.weight.data = {2, 3};
  m.encoder_out.weight.data = {-1};
  CHECK(irvuln::encode_line(m, BowVector{2, {0}}) == Vector{0.0});
  m.encoder_out.weight.data = {1.5};
  CHECK(irvuln::encode_line(m, BowVector{2, {0, 1}}) == Vector{7.5});
  CHECK(irvuln::encode_line(m, BowVector{2, {}}) == Vector{0.0});
}

TEST_CASE("encode_line matches the dense path") {
  SplitMix64 rng(8);
  auto m = Stage1Model::zeros(30, testing::tiny_config());
  testing::randomize(m, rng);
  for (int i = 0; i < 50; ++i) {
    const auto x = testing::random_bow(30, rng);
    const auto got = irvuln::encode_line(m, x);
    const auto want = encode_oracle(m, x);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(close(got[k], want[k]));
  }
}

TEST_CASE("zero networks give zero logits") {
  const auto c = testing::tiny_config();
  const auto s1 = Stage1Model::zeros(10, c);
  SplitMix64 rng(2);
  const auto lines = testing::random_lines(4, 10, rng);
  const auto out = irvuln::stage1_forward(s1, lines);
  CHECK(out.logits == std::array<double, 2>{0.0, 0.0});
  const auto s2 = Stage2Model::zeros(10, c);
  CHECK(irvuln::stage2_forward(s2, out.blstm, 1, lines[1]) == std::array<double, 2>{0.0, 0.0});

  // random stage 2, empty line vector, zero context
  auto r2 = Stage2Model::zeros(10, c);
  testing::randomize(r2, rng);
  CHECK(irvuln::stage2_forward(r2, out.blstm, 0, BowVector{10, {}}) ==
        std::array<double, 2>{0.0, 0.0});
}

TEST_CASE("single-line program uses both directions at position 0") {
  SplitMix64 rng(9);
  auto m = Stage1Model::zeros(12, testing::tiny_config());
  testing::randomize(m, rng);
  const auto lines = testing::random_lines(1, 12, rng);
  const auto out = irvuln::stage1_forward(m, lines);
  const auto want = stage1_oracle(m, lines);
  CHECK(out.blstm.forward_states[0] == want.hf[0]);
  CHECK(out.blstm.backward_states[0] == want.hb[0]);
}

TEST_CASE("stage-1 forward matches a step-by-step oracle") {
  SplitMix64 rng(10);
  for (std::size_t layers : {1, 2, 3}) {
    ModelConfig c = testing::tiny_config();
    c.blstm_layers = layers;
    auto m = Stage1Model::zeros(25, c);
    testing::randomize(m, rng);
    const auto lines = testing::random_lines(6, 25, rng);
    const auto got = irvuln::stage1_forward(m, lines);
    const auto want = stage1_oracle(m, lines);
    CHECK(close(got.logits[0], want.logits[0]));
    CHECK(close(got.logits[1], want.logits[1]));
    for (std::size_t t = 0; t < 6; ++t) {
      CHECK(testing::max_abs_diff(got.blstm.forward_states[t], want.hf[t]) < 1e-12);
      CHECK(testing::max_abs_diff(got.blstm.backward_states[t], want.hb[t]) < 1e-12);
    }
  }
}

TEST_CASE("stage-2 forward matches the dense path") {
  SplitMix64 rng(13);
  const auto c = testing::tiny_config();
  auto s1 = Stage1Model::zeros(20, c);
  auto s2 = Stage2Model::zeros(20, c);
  testing::randomize(s1, rng);
  testing::randomize(s2, rng);
  const auto lines = testing::random_lines(5, 20, rng);
  const auto ctx = irvuln::stage1_forward(s1, lines).blstm;
  for (std::size_t t = 0; t < 5; ++t) {
    const auto got = irvuln::stage2_forward(s2, ctx, t, lines[t]);
    const auto want = stage2_oracle(s2, ctx, t, lines[t]);
    CHECK(close(got[0], want[0]));
    CHECK(close(got[1], want[1]));
  }
}

TEST_CASE("analytic gradients agree with the reference losses") {
  irvuln::GradientSuiteOptions opt;
  opt.programs = 2;
  for (std::size_t layers : {1, 2}) {
    for (bool bias : {true, false}) {
      opt.model.blstm_layers = layers;
      opt.model.gate_bias = bias;
      opt.seed = 100 + layers;
      const auto r = irvuln::run_gradient_suite(opt);
      CHECK(r.stage1_max_error < 1e-4);
      CHECK(r.stage2_max_error < 1e-4);
    }
  }
}

TEST_CASE("reference losses agree with the forward passes") {
  SplitMix64 rng(14);
  const auto c = testing::tiny_config();
  auto s1 = Stage1Model::zeros(15, c);
  auto s2 = Stage2Model::zeros(15, c);
  testing::randomize(s1, rng);
  testing::randomize(s2, rng);
  const auto lines = testing::random_lines(4, 15, rng);
  Stage1Model g1 = Stage1Model::zeros(15, c);
  const double loss = irvuln::stage1_loss_and_gradient(s1, lines, 1, g1);
  CHECK(static_cast<double>(irvuln::stage1_reference_loss(s1, lines, 1)) ==
        doctest::Approx(loss).epsilon(1e-12));
  const auto ctx = irvuln::stage1_forward(s1, lines).blstm;
  Stage2Model g2 = Stage2Model::zeros(15, c);
  const double l2 = irvuln::stage2_loss_and_gradient(s2, ctx, 2, lines[2], 0, g2);
  CHECK(static_cast<double>(irvuln::stage2_reference_loss(s2, ctx, 2, lines[2], 0)) ==
        doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("training is deterministic and rejects single-class data") {
  const auto corpus = mini_corpus(8, 7);
  const auto vocab = irvuln::build_vocabulary(corpus);
  ModelConfig c = testing::tiny_config();
  c.stage1_epochs = 5;
  c.stage2_epochs = 5;
  const auto a = irvuln::train_stage1(corpus, vocab, c);
  const auto b = irvuln::train_stage1(corpus, vocab, c);
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.model == b.model);
  CHECK(a.loss_history.size() == 5);
  const auto a2 = irvuln::train_stage2(corpus, vocab, a.model, c);
  const auto b2 = irvuln::train_stage2(corpus, vocab, b.model, c);
  CHECK(a2.loss_history == b2.loss_history);
  CHECK(a2.model == b2.model);

  irvuln::Corpus clean;
  for (const auto& p : corpus.programs)
    if (p.label == 0) clean.programs.push_back(p);
  try {
    irvuln::train_stage1(clean, vocab, c);
    FAIL("expected an error");
  } catch (const irvuln::DataError& e) {
    CHECK(std::string(e.what()).find("single-class corpus") != std::string::npos);
  }
  CHECK_THROWS_AS(irvuln::train_stage2(clean, vocab, a.model, c), irvuln::DataError);
}

TEST_CASE("stage-2 epochs are balanced") {
  using testing::make_program;
  irvuln::Corpus c;
  c.programs.push_back(make_program("v1", {"a b", "c", "d e", "f"}, {0, 2}));
  c.programs.push_back(make_program("v2", {"a", "b c", "g", "h", "i"}, {1}));
  c.programs.push_back(make_program("v3", {"j", "k", "a"}, {2}));
  c.programs.push_back(make_program("n1", {"a", "b"}));
  const auto vocab = irvuln::build_vocabulary(c);
  ModelConfig cfg = testing::tiny_config();
  cfg.stage1_epochs = 1;
  cfg.stage2_epochs = 3;
  const auto s1 = irvuln::train_stage1(c, vocab, cfg);
  const Stage1Model frozen = s1.model;
  const auto s2 = irvuln::train_stage2(c, vocab, s1.model, cfg);
  CHECK(s2.samples_per_epoch == std::vector<std::size_t>{8, 8, 8});
  CHECK(s1.model == frozen);

  const irvuln::Vocabulary other({"zz"});
  CHECK_THROWS_AS(irvuln::train_stage2(c, other, s1.model, cfg), irvuln::DataError);
}

TEST_CASE("predict gating") {
  SplitMix64 rng(15);
  const auto c = testing::tiny_config();
  const irvuln::Vocabulary vocab({"a", "b", "c", "d"});
  auto s1 = Stage1Model::zeros(4, c);
  auto s2 = Stage2Model::zeros(4, c);
  s1.vocab_digest = s2.vocab_digest = vocab.digest();
  const auto program = testing::make_program("p", {"a b", "c", "d a", "zz"});

  // zero models: probability exactly 0.5 and >= makes everything positive
  const auto zero = irvuln::predict(s1, s2, vocab, program, 0.5);
  CHECK(zero.code_probability == 0.5);
  CHECK(zero.code_vulnerable);
  CHECK(zero.line_flags == std::vector<bool>(4, true));
  CHECK(zero.line_probabilities == std::vector<double>(4, 0.5));

  // stage 2 now scores every non-empty line as vulnerable
  s2.line_hidden.weight.data.assign(s2.line_hidden.weight.data.size(), 1.0);
  for (std::size_t k = 0; k < s2.line_out.weight.cols; ++k) {
    s2.line_out.weight(0, k) = -1.0;
    s2.line_out.weight(1, k) = 1.0;
  }
  // a stage 1 that calls the program clean
  for (int draw = 0;; ++draw) {
    REQUIRE(draw < 1000);
    testing::randomize(s1, rng);
    if (irvuln::predict(s1, s2, vocab, program).code_probability < 0.5) break;
  }
  const auto clean = irvuln::predict(s1, s2, vocab, program, 0.5);
  CHECK_FALSE(clean.code_vulnerable);
  CHECK(clean.line_flags == std::vector<bool>(4, false));
  for (std::size_t t = 0; t < 3; ++t) CHECK(clean.line_probabilities[t] > 0.5);

  auto wrong = s2;
  wrong.vocab_digest ^= 1;
  CHECK_THROWS_AS(irvuln::predict(s1, wrong, vocab, program), irvuln::DataError);
  auto wrong1 = s1;
  wrong1.vocab_digest ^= 1;
  CHECK_THROWS_AS(irvuln::predict(wrong1, s2, vocab, program), irvuln::DataError);
}

TEST_CASE("predict is pure") {
  SplitMix64 rng(16);
  const auto c = testing::tiny_config();
  const irvuln::Vocabulary vocab({"a", "b", "c"});
  auto s1 = Stage1Model::zeros(3, c);
  auto s2 = Stage2Model::zeros(3, c);
  testing::randomize(s1, rng);
  testing::randomize(s2, rng);
  s1.vocab_digest = s2.vocab_digest = vocab.digest();
  const auto s1_copy = s1;
  const auto s2_copy = s2;
  const auto program = testing::make_program("p", {"a", "b c", "c c a"});
  const auto first = irvuln::predict(s1, s2, vocab, program);
  CHECK(irvuln::predict(s1, s2, vocab, program) == first);
  CHECK(s1 == s1_copy);
  CHECK(s2 == s2_copy);
  CHECK(first.line_flags.size() == 3);
  CHECK(first.program_id == "p");
}

TEST_CASE("trained models flag the planted line of a held-out program") {
  const auto train = mini_corpus(400, 3);
  const auto vocab = irvuln::build_vocabulary(train);
  ModelConfig c;
  c.embed_dim = c.hidden_dim = c.code_hidden = c.line_hidden = 16;
  c.stage1_epochs = 30;
  c.stage2_epochs = 10;
  const auto s1 = irvuln::train_stage1(train, vocab, c);
  const auto s2 = irvuln::train_stage2(train, vocab, s1.model, c);

  irvuln::SynthConfig held;
  held.program_count = 20;
  held.seed = 1234;
  const auto test = irvuln::generate_corpus(held);
  std::size_t checked = 0;
  for (const auto& p : test.programs) {
    if (p.label != 1) continue;
    const auto pred = irvuln::predict(s1.model, s2.model, vocab, p);
    std::vector<std::size_t> flagged;
    for (std::size_t t = 0; t < pred.line_flags.size(); ++t)
      if (pred.line_flags[t]) flagged.push_back(t);
    CHECK(flagged == p.vulnerable_lines);
    ++checked;
  }
  CHECK(checked == 6);
}
