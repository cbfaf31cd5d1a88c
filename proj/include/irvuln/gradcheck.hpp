#pragma once

#include <cstdint>
#include <vector>

#include "irvuln/detector.hpp"

namespace irvuln {

struct GradientSuiteOptions {
  std::uint64_t seed = 1;
  std::size_t programs = 5;        // random programs per stage
  std::size_t min_lines = 3;
  std::size_t max_lines = 8;
  std::size_t vocab_size = 40;
  std::size_t coordinates = 200;   // per program, see nn::gradient_check
  double step = 1e-5;
  double margin = 1e-3;            // required ReLU distance from the kink
  ModelConfig model = small_model();

  static ModelConfig small_model() {
    ModelConfig c;
    c.embed_dim = 8;
    c.hidden_dim = 6;
    c.code_hidden = 7;
    c.line_hidden = 5;
    return c;
  }
};

struct GradientSuiteReport {
  double stage1_max_error = 0.0;
  double stage2_max_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t resampled = 0;  // draws rejected for sitting near a ReLU kink

  double max_error() const { return std::max(stage1_max_error, stage2_max_error); }
};

/// Independent straight-line evaluations of the training losses in extended
/// precision. They share no code with the forward passes in detector.cpp.
long double stage1_reference_loss(const Stage1Model& model, const std::vector<BowVector>& lines,
                                  int label);
long double stage2_reference_loss(const Stage2Model& model, const nn::BlstmOutput& context,
                                  std::size_t t, const BowVector& x, int label);

/// Finite-difference verification of both stages' analytic gradients on
/// random models (including non-zero gate biases) and random programs.
GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options);

}  // namespace irvuln
