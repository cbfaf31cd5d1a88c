#pragma once
// Helpers shared by the test executables.

#include <cmath>
#include <string>
#include <vector>

#include "irvuln/corpus.hpp"
#include "irvuln/detector.hpp"
#include "irvuln/rng.hpp"
#include "irvuln/vocab.hpp"

namespace testing {

inline irvuln::Program make_program(std::string id, std::vector<std::string> lines,
                                    std::vector<std::size_t> vulnerable = {}) {
  irvuln::Program p;
  p.id = std::move(id);
  p.lines = std::move(lines);
  p.label = vulnerable.empty() ? 0 : 1;
  p.vulnerable_lines = std::move(vulnerable);
  return p;
}

inline std::vector<std::string> filler_lines(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("%" + std::to_string(i) + " = add i32 1, 2");
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline irvuln::BowVector random_bow(std::size_t dim, irvuln::SplitMix64& rng, double density = 0.2) {
  irvuln::BowVector x{dim, {}};
  for (std::size_t j = 0; j < dim; ++j)
    if (rng.uniform() < density) x.on_indices.push_back(static_cast<std::uint32_t>(j));
  return x;
}

inline std::vector<irvuln::BowVector> random_lines(std::size_t n, std::size_t dim,
                                                   irvuln::SplitMix64& rng) {
  std::vector<irvuln::BowVector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_bow(dim, rng));
  return out;
}

inline irvuln::ModelConfig tiny_config() {
  irvuln::ModelConfig c;
  c.embed_dim = 5;
  c.hidden_dim = 4;
  c.code_hidden = 6;
  c.line_hidden = 3;
  return c;
}

// Every parameter, biases included, uniform in [-scale, scale].
template <typename Model>
void randomize(Model& model, irvuln::SplitMix64& rng, double scale = 0.6) {
  for (auto t : model.tensors())
    for (double& v : t) v = rng.uniform(-scale, scale);
}

}  // namespace testing
