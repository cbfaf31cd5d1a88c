#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "irvuln/rng.hpp"

namespace irvuln::nn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Fills with uniform draws in [-1/sqrt(fan_in), 1/sqrt(fan_in)], row-major.
void init_uniform(Matrix& m, std::size_t fan_in, SplitMix64& rng);

double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(std::span<double> y, double alpha, std::span<const double> x);

/// Linear map without bias (the weights of every fully connected layer here).
struct DenseParams {
  Matrix weight;  // out_dim x in_dim

  DenseParams() = default;
  DenseParams(std::size_t out_dim, std::size_t in_dim) : weight(out_dim, in_dim) {}
  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
  bool operator==(const DenseParams&) const = default;
};

Vector dense_forward(const DenseParams& params, std::span<const double> x);

/// dweight += dy x^T. If dx is non-empty it is overwritten with W^T dy.
void dense_backward(const DenseParams& params, std::span<const double> x,
                    std::span<const double> dy, Matrix& dweight, std::span<double> dx);

Vector relu(std::span<const double> x);
/// Zeroes grad wherever pre <= 0 (subgradient 0 at the kink).
void relu_backward(std::span<const double> pre, std::span<double> grad);

double sigmoid(double z);

/// One LSTM cell. Every gate reads [x ; h_prev]. Gates use the logistic
/// sigmoid; candidate and cell output use ReLU.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix input_gate, forget_gate, output_gate, candidate;  // hidden x (input + hidden)
  Vector input_bias, forget_bias, output_bias, candidate_bias;
  /// When positive, cell values are clamped to [-cell_clip, cell_clip]. With a
  /// ReLU candidate the state can otherwise grow geometrically along a sequence.
  double cell_clip = 0.0;

  LstmParams() = default;
  LstmParams(std::size_t input, std::size_t hidden);

  /// Weights then biases, gates in the order input, forget, output, candidate.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  Vector h;
  Vector c;
};

/// Activations kept for the backward pass.
struct LstmStepCache {
  Vector xh;  // [x ; h_prev]
  Vector c_prev;
  Vector i, f, o;   // gate outputs
  Vector g_pre, g;  // candidate pre-activation and ReLU output
  Vector c, h;
};

LstmState lstm_step(const LstmParams& params, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev,
                    LstmStepCache* cache = nullptr);

/// Accumulates parameter gradients into `grads`; overwrites dxh (size
/// input + hidden) and dc_prev (size hidden).
void lstm_step_backward(const LstmParams& params, const LstmStepCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmParams& grads, std::span<double> dxh, std::span<double> dc_prev);

/// backward_states[t] is the backward cell's output at position t.
struct BlstmOutput {
  std::vector<Vector> forward_states;
  std::vector<Vector> backward_states;
};

struct BlstmTrace {
  std::vector<LstmStepCache> forward;
  std::vector<LstmStepCache> backward;  // indexed by position
};

/// Zero initial h and c in both directions. Throws on an empty sequence.
BlstmOutput blstm_forward(const LstmParams& fwd, const LstmParams& bwd,
                          const std::vector<Vector>& inputs, BlstmTrace* trace = nullptr);

/// Backpropagates per-position gradients of the forward and backward states.
/// Gradients accumulate into grad_fwd/grad_bwd; d_inputs is overwritten.
void blstm_backward(const LstmParams& fwd, const LstmParams& bwd, const BlstmTrace& trace,
                    const std::vector<Vector>& d_forward_states,
                    const std::vector<Vector>& d_backward_states, LstmParams& grad_fwd,
                    LstmParams& grad_bwd, std::vector<Vector>& d_inputs);

std::array<double, 2> softmax2(std::span<const double> logits);

struct SoftmaxLoss {
  double loss = 0.0;
  std::array<double, 2> dlogits{};
};

/// Two-class cross-entropy in log-sum-exp form.
SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, int label);

/// p <- p - lr * g over every tensor pair. Throws std::invalid_argument on
/// shape mismatch.
void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, double lr);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients with central differences
/// (f(p+h) - f(p-h)) / ((p+h) - (p-h)), the denominator being the step
/// actually taken in double precision. Checks `coordinates` entries drawn uniformly from
/// those with a non-zero analytic gradient plus `coordinates` entries drawn
/// from all entries (everything when fewer exist). `loss` must read the
/// current values behind `params`; each entry is restored after probing.
/// It may evaluate in extended precision, which keeps the difference quotient
/// clear of rounding noise for gradients near the 1e-8 floor.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). Throws NumericError on a
/// non-finite loss.
GradientCheckResult gradient_check(const std::function<long double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   SplitMix64& rng, std::size_t coordinates = 200,
                                   double h = 1e-5);

}  // namespace irvuln::nn
