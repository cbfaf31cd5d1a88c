#include "irvuln/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "irvuln/error.hpp"

namespace irvuln {

namespace {

std::vector<BowVector> random_program(std::size_t vocab_size, std::size_t length,
                                      SplitMix64& rng) {
  std::vector<BowVector> lines(length);
  for (auto& x : lines) {
    x.dimension = vocab_size;
    const std::size_t on = 1 + rng.below(std::min<std::size_t>(6, vocab_size));
    for (std::size_t k = 0; k < on; ++k)
      x.on_indices.push_back(static_cast<std::uint32_t>(rng.below(vocab_size)));
    std::sort(x.on_indices.begin(), x.on_indices.end());
    x.on_indices.erase(std::unique(x.on_indices.begin(), x.on_indices.end()), x.on_indices.end());
  }
  return lines;
}

void randomize_biases(Stage1Model& model, SplitMix64& rng) {
  for (auto& layer : model.blstm)
    for (auto* cell : {&layer.forward, &layer.backward})
      for (auto* b : {&cell->input_bias, &cell->forget_bias, &cell->output_bias, &cell->candidate_bias})
        for (double& v : *b) v = rng.uniform(-0.5, 0.5);
}

template <typename Model>
std::vector<std::span<const double>> as_const(Model& m) {
  std::vector<std::span<const double>> out;
  for (auto t : m.tensors()) out.emplace_back(t);
  return out;
}

using Real = long double;
using RealVec = std::vector<Real>;

Real relu_r(Real z) { return z > 0 ? z : 0; }
Real sigmoid_r(Real z) { return 1 / (1 + std::exp(-z)); }

RealVec matvec(const nn::Matrix& w, const RealVec& x) {
  RealVec y(w.rows, 0);
  for (std::size_t r = 0; r < w.rows; ++r)
    for (std::size_t c = 0; c < w.cols; ++c) y[r] += static_cast<Real>(w(r, c)) * x[c];
  return y;
}

RealVec dense_bow(const BowVector& x) {
  RealVec v(x.dimension, 0);
  for (const auto j : x.on_indices) v[j] = 1;
  return v;
}

std::vector<RealVec> run_cell(const nn::LstmParams& p, const std::vector<RealVec>& inputs,
                              bool reverse) {
  const std::size_t m = p.hidden_dim;
  const std::size_t len = inputs.size();
  std::vector<RealVec> out(len);
  RealVec h(m, 0), c(m, 0);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    RealVec xh = inputs[t];
    xh.insert(xh.end(), h.begin(), h.end());
    const RealVec zi = matvec(p.input_gate, xh), zf = matvec(p.forget_gate, xh),
                  zo = matvec(p.output_gate, xh), zg = matvec(p.candidate, xh);
    for (std::size_t k = 0; k < m; ++k) {
      const Real i = sigmoid_r(zi[k] + p.input_bias[k]);
      const Real f = sigmoid_r(zf[k] + p.forget_bias[k]);
      const Real o = sigmoid_r(zo[k] + p.output_bias[k]);
      const Real g = relu_r(zg[k] + p.candidate_bias[k]);
      c[k] = f * c[k] + i * g;
      if (p.cell_clip > 0) c[k] = std::clamp<Real>(c[k], -p.cell_clip, p.cell_clip);
      h[k] = o * relu_r(c[k]);
    }
    out[t] = h;
  }
  return out;
}

Real cross_entropy(Real l0, Real l1, int label) {
  const Real mx = std::max(l0, l1);
  const Real lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
  return lse - (label == 1 ? l1 : l0);
}

}  // namespace

long double stage1_reference_loss(const Stage1Model& model, const std::vector<BowVector>& lines,
                                  int label) {
  std::vector<RealVec> seq;
  for (const auto& x : lines) {
    RealVec a = matvec(model.encoder_in.weight, dense_bow(x));
    for (auto& v : a) v = relu_r(v);
    RealVec e = matvec(model.encoder_out.weight, a);
    for (auto& v : e) v = relu_r(v);
    seq.push_back(std::move(e));
  }
  std::vector<RealVec> fwd, bwd;
  for (const auto& layer : model.blstm) {
    fwd = run_cell(layer.forward, seq, false);
    bwd = run_cell(layer.backward, seq, true);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      seq[t] = fwd[t];
      seq[t].insert(seq[t].end(), bwd[t].begin(), bwd[t].end());
    }
  }
  RealVec latent = fwd.back();
  latent.insert(latent.end(), bwd.front().begin(), bwd.front().end());
  RealVec hidden = matvec(model.code_hidden.weight, latent);
  for (auto& v : hidden) v = relu_r(v);
  const RealVec logits = matvec(model.code_out.weight, hidden);
  return cross_entropy(logits[0], logits[1], label);
}

long double stage2_reference_loss(const Stage2Model& model, const nn::BlstmOutput& context,
                                  std::size_t t, const BowVector& x, int label) {
  RealVec u(context.forward_states[t].begin(), context.forward_states[t].end());
  u.insert(u.end(), context.backward_states[t].begin(), context.backward_states[t].end());
  const RealVec bow = dense_bow(x);
  u.insert(u.end(), bow.begin(), bow.end());
  RealVec hidden = matvec(model.line_hidden.weight, u);
  for (auto& v : hidden) v = relu_r(v);
  const RealVec logits = matvec(model.line_out.weight, hidden);
  return cross_entropy(logits[0], logits[1], label);
}

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& opt) {
  if (opt.min_lines == 0 || opt.min_lines > opt.max_lines || opt.vocab_size == 0)
    throw std::invalid_argument("gradient suite: bad program shape options");
  SplitMix64 rng(opt.seed);
  GradientSuiteReport report;
  constexpr std::size_t kMaxDraws = 1000;

  for (std::size_t n = 0; n < opt.programs; ++n) {
    // Stage 1: encoder, BLSTM and classifier jointly.
    Stage1Model model;
    std::vector<BowVector> lines;
    int label = 0;
    for (std::size_t draw = 0;; ++draw) {
      if (draw == kMaxDraws) throw NumericError("gradient suite: could not avoid ReLU kinks");
      model = init_stage1(opt.vocab_size, opt.model, rng);
      randomize_biases(model, rng);
      const std::size_t len = opt.min_lines + rng.below(opt.max_lines - opt.min_lines + 1);
      lines = random_program(opt.vocab_size, len, rng);
      label = static_cast<int>(rng.below(2));
      if (stage1_relu_margin(model, lines) > opt.margin) break;
      ++report.resampled;
    }
    Stage1Model grads = Stage1Model::zeros(opt.vocab_size, opt.model);
    stage1_loss_and_gradient(model, lines, label, grads);
    const auto loss1 = [&] { return stage1_reference_loss(model, lines, label); };
    const auto r1 = nn::gradient_check(loss1, model.tensors(), as_const(grads), rng,
                                       opt.coordinates, opt.step);
    report.stage1_max_error = std::max(report.stage1_max_error, r1.max_relative_error);
    report.coordinates_checked += r1.coordinates_checked;

    // Stage 2 against a frozen random context.
    const auto context = stage1_forward(model, lines).blstm;
    Stage2Model line_model;
    std::size_t t = 0;
    for (std::size_t draw = 0;; ++draw) {
      if (draw == kMaxDraws) throw NumericError("gradient suite: could not avoid ReLU kinks");
      line_model = init_stage2(opt.vocab_size, opt.model, rng);
      t = rng.below(lines.size());
      if (stage2_relu_margin(line_model, context, t, lines[t]) > opt.margin) break;
      ++report.resampled;
    }
    label = static_cast<int>(rng.below(2));
    Stage2Model grads2 = Stage2Model::zeros(opt.vocab_size, opt.model);
    stage2_loss_and_gradient(line_model, context, t, lines[t], label, grads2);
    const auto loss2 = [&] {
      return stage2_reference_loss(line_model, context, t, lines[t], label);
    };
    const auto r2 = nn::gradient_check(loss2, line_model.tensors(), as_const(grads2), rng,
                                       opt.coordinates, opt.step);
    report.stage2_max_error = std::max(report.stage2_max_error, r2.max_relative_error);
    report.coordinates_checked += r2.coordinates_checked;
  }
  return report;
}

}  // namespace irvuln
