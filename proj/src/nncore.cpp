#include "irvuln/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "irvuln/error.hpp"

namespace irvuln::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void gate_forward(const Matrix& w, const Vector& b, std::span<const double> xh,
                  std::span<double> z) {
  for (std::size_t r = 0; r < w.rows; ++r) z[r] = dot(w.row(r), xh) + b[r];
}

void gate_backward(const Matrix& w, const Vector& dz, std::span<const double> xh, Matrix& dw,
                   Vector& db, std::span<double> dxh) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    if (dz[r] == 0.0) continue;
    axpy(dw.row(r), dz[r], xh);
    db[r] += dz[r];
    axpy(dxh, dz[r], w.row(r));
  }
}

}  // namespace

void init_uniform(Matrix& m, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : m.data) v = rng.uniform(-bound, bound);
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four fixed accumulators: a deterministic summation order that still
  // pipelines well.
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(std::span<double> y, double alpha, std::span<const double> x) {
  double* __restrict yp = y.data();
  const double* __restrict xp = x.data();
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

Vector dense_forward(const DenseParams& params, std::span<const double> x) {
  require(x.size() == params.in_dim(), "dense_forward: dimension mismatch");
  Vector y(params.out_dim());
  for (std::size_t r = 0; r < y.size(); ++r) y[r] = dot(params.weight.row(r), x);
  return y;
}

void dense_backward(const DenseParams& params, std::span<const double> x,
                    std::span<const double> dy, Matrix& dweight, std::span<double> dx) {
  require(x.size() == params.in_dim() && dy.size() == params.out_dim(),
          "dense_backward: dimension mismatch");
  require(dweight.rows == params.out_dim() && dweight.cols == params.in_dim(),
          "dense_backward: gradient shape mismatch");
  if (!dx.empty()) {
    require(dx.size() == params.in_dim(), "dense_backward: dx dimension mismatch");
    std::fill(dx.begin(), dx.end(), 0.0);
  }
  for (std::size_t r = 0; r < params.out_dim(); ++r) {
    if (dy[r] == 0.0) continue;
    axpy(dweight.row(r), dy[r], x);
    if (!dx.empty()) axpy(dx, dy[r], params.weight.row(r));
  }
}

Vector relu(std::span<const double> x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

void relu_backward(std::span<const double> pre, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LstmParams::LstmParams(std::size_t input, std::size_t hidden)
    : input_dim(input),
      hidden_dim(hidden),
      input_gate(hidden, input + hidden),
      forget_gate(hidden, input + hidden),
      output_gate(hidden, input + hidden),
      candidate(hidden, input + hidden),
      input_bias(hidden, 0.0),
      forget_bias(hidden, 0.0),
      output_bias(hidden, 0.0),
      candidate_bias(hidden, 0.0) {
  require(input > 0 && hidden > 0, "LstmParams: dimensions must be positive");
}

std::vector<std::span<double>> LstmParams::tensors() {
  return {input_gate.data, forget_gate.data, output_gate.data, candidate.data,
          input_bias,      forget_bias,      output_bias,      candidate_bias};
}

std::vector<std::span<const double>> LstmParams::tensors() const {
  return {input_gate.data, forget_gate.data, output_gate.data, candidate.data,
          input_bias,      forget_bias,      output_bias,      candidate_bias};
}

LstmState lstm_step(const LstmParams& p, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev,
                    LstmStepCache* cache) {
  require(x.size() == p.input_dim, "lstm_step: input dimension mismatch");
  require(h_prev.size() == p.hidden_dim && c_prev.size() == p.hidden_dim,
          "lstm_step: state dimension mismatch");
  const std::size_t m = p.hidden_dim;

  LstmStepCache local;
  LstmStepCache& s = cache ? *cache : local;
  s.xh.resize(p.input_dim + m);
  std::copy(x.begin(), x.end(), s.xh.begin());
  std::copy(h_prev.begin(), h_prev.end(), s.xh.begin() + static_cast<std::ptrdiff_t>(p.input_dim));
  s.c_prev.assign(c_prev.begin(), c_prev.end());
  s.i.resize(m);
  s.f.resize(m);
  s.o.resize(m);
  s.g_pre.resize(m);
  s.g.resize(m);
  s.c.resize(m);
  s.h.resize(m);

  gate_forward(p.input_gate, p.input_bias, s.xh, s.i);
  gate_forward(p.forget_gate, p.forget_bias, s.xh, s.f);
  gate_forward(p.output_gate, p.output_bias, s.xh, s.o);
  gate_forward(p.candidate, p.candidate_bias, s.xh, s.g_pre);
  for (std::size_t k = 0; k < m; ++k) {
    s.i[k] = sigmoid(s.i[k]);
    s.f[k] = sigmoid(s.f[k]);
    s.o[k] = sigmoid(s.o[k]);
    s.g[k] = s.g_pre[k] > 0.0 ? s.g_pre[k] : 0.0;
    s.c[k] = s.f[k] * s.c_prev[k] + s.i[k] * s.g[k];
    if (p.cell_clip > 0.0) s.c[k] = std::clamp(s.c[k], -p.cell_clip, p.cell_clip);
    s.h[k] = s.o[k] * (s.c[k] > 0.0 ? s.c[k] : 0.0);
  }
  return {s.h, s.c};
}

void lstm_step_backward(const LstmParams& p, const LstmStepCache& s, std::span<const double> dh,
                        std::span<const double> dc, LstmParams& grads, std::span<double> dxh,
                        std::span<double> dc_prev) {
  const std::size_t m = p.hidden_dim;
  require(dh.size() == m && dc.size() == m && dc_prev.size() == m &&
              dxh.size() == p.input_dim + m,
          "lstm_step_backward: dimension mismatch");
  Vector dzi(m), dzf(m), dzo(m), dzg(m);
  for (std::size_t k = 0; k < m; ++k) {
    const bool c_active = s.c[k] > 0.0;
    const double relu_c = c_active ? s.c[k] : 0.0;
    // a clamped cell passes no gradient to anything upstream of the clamp
    const bool clipped = p.cell_clip > 0.0 && std::abs(s.c[k]) >= p.cell_clip;
    const double dct = clipped ? 0.0 : dc[k] + (c_active ? dh[k] * s.o[k] : 0.0);
    const double d_o = dh[k] * relu_c;
    const double d_i = dct * s.g[k];
    const double d_f = dct * s.c_prev[k];
    const double d_g = dct * s.i[k];
    dc_prev[k] = dct * s.f[k];
    dzi[k] = d_i * s.i[k] * (1.0 - s.i[k]);
    dzf[k] = d_f * s.f[k] * (1.0 - s.f[k]);
    dzo[k] = d_o * s.o[k] * (1.0 - s.o[k]);
    dzg[k] = s.g_pre[k] > 0.0 ? d_g : 0.0;
  }
  std::fill(dxh.begin(), dxh.end(), 0.0);
  gate_backward(p.input_gate, dzi, s.xh, grads.input_gate, grads.input_bias, dxh);
  gate_backward(p.forget_gate, dzf, s.xh, grads.forget_gate, grads.forget_bias, dxh);
  gate_backward(p.output_gate, dzo, s.xh, grads.output_gate, grads.output_bias, dxh);
  gate_backward(p.candidate, dzg, s.xh, grads.candidate, grads.candidate_bias, dxh);
}

BlstmOutput blstm_forward(const LstmParams& fwd, const LstmParams& bwd,
                          const std::vector<Vector>& inputs, BlstmTrace* trace) {
  if (inputs.empty()) throw std::invalid_argument("blstm_forward: empty sequence");
  require(fwd.input_dim == bwd.input_dim && fwd.hidden_dim == bwd.hidden_dim,
          "blstm_forward: forward/backward cell shapes differ");
  const std::size_t len = inputs.size();
  const std::size_t m = fwd.hidden_dim;
  BlstmOutput out;
  out.forward_states.resize(len);
  out.backward_states.resize(len);
  if (trace) {
    trace->forward.resize(len);
    trace->backward.resize(len);
  }

  Vector h(m, 0.0), c(m, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    auto state = lstm_step(fwd, inputs[t], h, c, trace ? &trace->forward[t] : nullptr);
    h = std::move(state.h);
    c = std::move(state.c);
    out.forward_states[t] = h;
  }
  std::fill(h.begin(), h.end(), 0.0);
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t t = len; t-- > 0;) {
    auto state = lstm_step(bwd, inputs[t], h, c, trace ? &trace->backward[t] : nullptr);
    h = std::move(state.h);
    c = std::move(state.c);
    out.backward_states[t] = h;
  }
  return out;
}

void blstm_backward(const LstmParams& fwd, const LstmParams& bwd, const BlstmTrace& trace,
                    const std::vector<Vector>& d_forward_states,
                    const std::vector<Vector>& d_backward_states, LstmParams& grad_fwd,
                    LstmParams& grad_bwd, std::vector<Vector>& d_inputs) {
  const std::size_t len = trace.forward.size();
  require(trace.backward.size() == len && d_forward_states.size() == len &&
              d_backward_states.size() == len,
          "blstm_backward: sequence length mismatch");
  const std::size_t m = fwd.hidden_dim;
  const std::size_t in = fwd.input_dim;
  d_inputs.assign(len, Vector(in, 0.0));

  Vector dh(m), dc(m, 0.0), dc_prev(m), dxh(in + m);
  Vector carry_h(m, 0.0);

  // Forward cell: recurrence runs left to right, so gradients flow right to left.
  for (std::size_t t = len; t-- > 0;) {
    for (std::size_t k = 0; k < m; ++k) dh[k] = d_forward_states[t][k] + carry_h[k];
    lstm_step_backward(fwd, trace.forward[t], dh, dc, grad_fwd, dxh, dc_prev);
    axpy(d_inputs[t], 1.0, std::span<const double>(dxh.data(), in));
    std::copy(dxh.begin() + static_cast<std::ptrdiff_t>(in), dxh.end(), carry_h.begin());
    dc.swap(dc_prev);
  }

  std::fill(carry_h.begin(), carry_h.end(), 0.0);
  std::fill(dc.begin(), dc.end(), 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t k = 0; k < m; ++k) dh[k] = d_backward_states[t][k] + carry_h[k];
    lstm_step_backward(bwd, trace.backward[t], dh, dc, grad_bwd, dxh, dc_prev);
    axpy(d_inputs[t], 1.0, std::span<const double>(dxh.data(), in));
    std::copy(dxh.begin() + static_cast<std::ptrdiff_t>(in), dxh.end(), carry_h.begin());
    dc.swap(dc_prev);
  }
}

std::array<double, 2> softmax2(std::span<const double> logits) {
  require(logits.size() == 2, "softmax2: expected two logits");
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, int label) {
  require(logits.size() == 2, "softmax_cross_entropy: expected two logits");
  require(label == 0 || label == 1, "softmax_cross_entropy: label must be 0 or 1");
  // -log p = max(0, other - own) + log1p(exp(-|other - own|)); exact for large margins
  const double margin = logits[1 - static_cast<std::size_t>(label)] -
                        logits[static_cast<std::size_t>(label)];
  SoftmaxLoss out;
  out.loss = std::max(0.0, margin) + std::log1p(std::exp(-std::abs(margin)));
  const auto p = softmax2(logits);
  out.dlogits = p;
  out.dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, double lr) {
  require(params.size() == grads.size(), "sgd_step: tensor count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t)
    require(params[t].size() == grads[t].size(), "sgd_step: tensor shape mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) axpy(params[t], -lr, grads[t]);
}

GradientCheckResult gradient_check(const std::function<long double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   SplitMix64& rng, std::size_t coordinates, double h) {
  require(params.size() == analytic.size(), "gradient_check: tensor count mismatch");
  struct Coord {
    std::size_t tensor, index;
  };
  std::vector<Coord> all, nonzero;
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == analytic[t].size(), "gradient_check: tensor shape mismatch");
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      all.push_back({t, i});
      if (analytic[t][i] != 0.0) nonzero.push_back({t, i});
    }
  }
  partial_shuffle(std::span<Coord>(nonzero), coordinates, rng);
  partial_shuffle(std::span<Coord>(all), coordinates, rng);
  std::vector<Coord> picked(nonzero.begin(),
                            nonzero.begin() + static_cast<std::ptrdiff_t>(
                                                  std::min(coordinates, nonzero.size())));
  picked.insert(picked.end(), all.begin(),
                all.begin() + static_cast<std::ptrdiff_t>(std::min(coordinates, all.size())));

  auto eval = [&] {
    const long double v = loss();
    if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss");
    return v;
  };
  eval();

  GradientCheckResult result;
  for (const auto& c : picked) {
    double& p = params[c.tensor][c.index];
    const double saved = p;
    const double above = saved + h;
    const double below = saved - h;
    p = above;
    const long double up = eval();
    p = below;
    const long double down = eval();
    p = saved;
    const double numeric = static_cast<double>((up - down) / (static_cast<long double>(above) -
                                                              static_cast<long double>(below)));
    const double a = analytic[c.tensor][c.index];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.coordinates_checked;
    if (rel > result.max_relative_error || result.coordinates_checked == 1) {
      result.max_relative_error = rel;
      result.worst_tensor = c.tensor;
      result.worst_index = c.index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace irvuln::nn
