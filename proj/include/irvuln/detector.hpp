#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "irvuln/corpus.hpp"
#include "irvuln/nncore.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln {

struct ModelConfig {
  std::size_t embed_dim = 64;    // K
  std::size_t hidden_dim = 64;   // M, per direction
  std::size_t blstm_layers = 1;
  std::size_t code_hidden = 64;  // width of the whole-code classifier's hidden layer
  std::size_t line_hidden = 64;  // width of the line classifier's hidden layer
  double learning_rate = 0.05;
  std::size_t stage1_epochs = 30;
  std::size_t stage2_epochs = 30;
  std::uint64_t seed = 42;
  double decision_threshold = 0.5;  // on the class-1 probability, compared with >=
  bool gate_bias = true;            // LSTM gate biases; dense layers never have one
  /// Rescales a step's gradient to this global L2 norm when it is larger;
  /// 0 gives unmodified SGD. ReLU cells have unbounded state, and without a
  /// cap a single large step can make the recurrence explode.
  double clip_norm = 1.0;
  /// Bound on |LSTM cell state|; 0 leaves it unbounded. See nn::LstmParams.
  double cell_clip = 5.0;

  /// Throws std::invalid_argument.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlstmLayer {
  nn::LstmParams forward;
  nn::LstmParams backward;
  bool operator==(const BlstmLayer&) const = default;
};

/// Encoder, BLSTM and whole-code classifier, trained jointly.
struct Stage1Model {
  nn::DenseParams encoder_in;   // K x N
  nn::DenseParams encoder_out;  // K x K
  std::vector<BlstmLayer> blstm;
  nn::DenseParams code_hidden;  // Kc x 2M
  nn::DenseParams code_out;     // 2 x Kc
  std::uint64_t vocab_digest = 0;

  /// All-zero parameters with the shapes implied by `config`.
  static Stage1Model zeros(std::size_t vocab_size, const ModelConfig& config);

  std::size_t vocab_size() const { return encoder_in.in_dim(); }
  std::size_t hidden_dim() const { return blstm.front().forward.hidden_dim; }

  /// Tensor order: W0, W1, each layer's forward then backward cell, W2, W3.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const Stage1Model&) const = default;
};

/// Line classifier over [h_F(t) ; h_B(t) ; x(t)].
struct Stage2Model {
  nn::DenseParams line_hidden;  // Kl x (2M + N)
  nn::DenseParams line_out;     // 2 x Kl
  std::uint64_t vocab_digest = 0;

  static Stage2Model zeros(std::size_t vocab_size, const ModelConfig& config);

  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const Stage2Model&) const = default;
};

/// Random initialization, uniform in +-1/sqrt(fan_in). Draws W0, W1, each
/// layer's forward and backward gate weights (biases start at zero), W2, W3.
Stage1Model init_stage1(std::size_t vocab_size, const ModelConfig& config, SplitMix64& rng);
/// Draws W4 then W5.
Stage2Model init_stage2(std::size_t vocab_size, const ModelConfig& config, SplitMix64& rng);

/// ReLU(W1 ReLU(W0 x)), reading only the W0 columns named by x.
nn::Vector encode_line(const Stage1Model& model, const BowVector& x);

struct Stage1Output {
  std::array<double, 2> logits{};
  nn::BlstmOutput blstm;  // top layer
};

Stage1Output stage1_forward(const Stage1Model& model, const std::vector<BowVector>& lines);

std::array<double, 2> stage2_forward(const Stage2Model& model, const nn::BlstmOutput& context,
                                     std::size_t t, const BowVector& x);

/// Cross-entropy of the whole-code prediction; gradients accumulate into
/// `grads` (same shapes as `model`).
double stage1_loss_and_gradient(const Stage1Model& model, const std::vector<BowVector>& lines,
                                int label, Stage1Model& grads);

double stage2_loss_and_gradient(const Stage2Model& model, const nn::BlstmOutput& context,
                                std::size_t t, const BowVector& x, int label, Stage2Model& grads);

/// Smallest |z| over the non-zero ReLU pre-activations of a forward pass
/// (exact zeros are structural and stay put under perturbation). Finite
/// differences with step h are only trustworthy when this exceeds h by a
/// wide margin.
double stage1_relu_margin(const Stage1Model& model, const std::vector<BowVector>& lines);
double stage2_relu_margin(const Stage2Model& model, const nn::BlstmOutput& context, std::size_t t,
                          const BowVector& x);

struct Stage1Training {
  Stage1Model model;
  std::vector<double> loss_history;  // mean loss per epoch
};

struct Stage2Training {
  Stage2Model model;
  std::vector<double> loss_history;
  std::vector<std::size_t> samples_per_epoch;
};

/// Class-balanced SGD, one program per step. Parameters are drawn from
/// SplitMix64(config.seed); each epoch then takes a sample of the majority
/// class followed by a shuffle of the combined list, from the same stream.
Stage1Training train_stage1(const Corpus& corpus, const Vocabulary& vocab,
                            const ModelConfig& config);

/// Trains only the line classifier; `stage1` is read-only. Uses a stream
/// derived from config.seed separate from stage 1's.
Stage2Training train_stage2(const Corpus& corpus, const Vocabulary& vocab,
                            const Stage1Model& stage1, const ModelConfig& config);

struct Prediction {
  std::string program_id;
  bool code_vulnerable = false;
  double code_probability = 0.0;
  std::vector<bool> line_flags;
  std::vector<double> line_probabilities;

  bool operator==(const Prediction&) const = default;
};

/// Whole-code verdict first; line flags only switch on for programs judged
/// vulnerable. Throws DataError on vocabulary digest mismatch.
Prediction predict(const Stage1Model& stage1, const Stage2Model& stage2, const Vocabulary& vocab,
                   const Program& program, double threshold = 0.5);

}  // namespace irvuln
