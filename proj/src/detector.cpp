#include "irvuln/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "irvuln/error.hpp"

namespace irvuln {

namespace {

using nn::Matrix;
using nn::Vector;

constexpr std::uint64_t kStage2StreamSalt = 0x5354414745320000ULL;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Activations of one stage-1 forward pass, kept for backpropagation.
struct Stage1Trace {
  std::vector<Vector> encoder_pre;  // W0 x
  std::vector<Vector> encoder_mid;  // ReLU(W0 x)
  std::vector<Vector> embed_pre;    // W1 ReLU(W0 x)
  std::vector<std::vector<Vector>> layer_inputs;
  std::vector<nn::BlstmTrace> layer_traces;
  std::vector<nn::BlstmOutput> layer_outputs;
  Vector latent;
  Vector hidden_pre;
  Vector hidden;
  std::array<double, 2> logits{};
};

Vector sparse_columns_sum(const Matrix& w, std::size_t column_offset, const BowVector& x) {
  Vector out(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const auto row = w.row(r);
    double s = 0.0;
    for (const auto j : x.on_indices) s += row[column_offset + j];
    out[r] = s;
  }
  return out;
}

Vector concat_states(const nn::BlstmOutput& out, std::size_t t) {
  Vector v(out.forward_states[t]);
  v.insert(v.end(), out.backward_states[t].begin(), out.backward_states[t].end());
  return v;
}

void check_bow(const BowVector& x, std::size_t vocab_size) {
  if (x.dimension != vocab_size) throw std::invalid_argument("bag-of-words dimension mismatch");
  for (const auto j : x.on_indices)
    if (j >= vocab_size) throw std::invalid_argument("bag-of-words index out of range");
}

Stage1Trace stage1_trace(const Stage1Model& model, const std::vector<BowVector>& lines) {
  if (lines.empty()) throw std::invalid_argument("stage1_forward: empty program");
  Stage1Trace tr;
  const std::size_t len = lines.size();
  tr.encoder_pre.resize(len);
  tr.encoder_mid.resize(len);
  tr.embed_pre.resize(len);
  std::vector<Vector> embeddings(len);
  for (std::size_t t = 0; t < len; ++t) {
    check_bow(lines[t], model.vocab_size());
    tr.encoder_pre[t] = sparse_columns_sum(model.encoder_in.weight, 0, lines[t]);
    tr.encoder_mid[t] = nn::relu(tr.encoder_pre[t]);
    tr.embed_pre[t] = nn::dense_forward(model.encoder_out, tr.encoder_mid[t]);
    embeddings[t] = nn::relu(tr.embed_pre[t]);
  }

  const std::size_t layers = model.blstm.size();
  tr.layer_inputs.resize(layers);
  tr.layer_traces.resize(layers);
  tr.layer_outputs.resize(layers);
  tr.layer_inputs[0] = std::move(embeddings);
  for (std::size_t l = 0; l < layers; ++l) {
    tr.layer_outputs[l] = nn::blstm_forward(model.blstm[l].forward, model.blstm[l].backward,
                                            tr.layer_inputs[l], &tr.layer_traces[l]);
    if (l + 1 < layers) {
      tr.layer_inputs[l + 1].resize(len);
      for (std::size_t t = 0; t < len; ++t)
        tr.layer_inputs[l + 1][t] = concat_states(tr.layer_outputs[l], t);
    }
  }

  // Each direction's last computed output: forward at the final line,
  // backward at the first.
  const auto& top = tr.layer_outputs.back();
  tr.latent = top.forward_states.back();
  tr.latent.insert(tr.latent.end(), top.backward_states.front().begin(),
                   top.backward_states.front().end());
  tr.hidden_pre = nn::dense_forward(model.code_hidden, tr.latent);
  tr.hidden = nn::relu(tr.hidden_pre);
  const Vector logits = nn::dense_forward(model.code_out, tr.hidden);
  tr.logits = {logits[0], logits[1]};
  return tr;
}

void stage1_backward(const Stage1Model& model, const std::vector<BowVector>& lines,
                     const Stage1Trace& tr, std::span<const double> dlogits, Stage1Model& g) {
  const std::size_t len = lines.size();
  const std::size_t m = model.hidden_dim();

  Vector dhidden(model.code_out.in_dim());
  nn::dense_backward(model.code_out, tr.hidden, dlogits, g.code_out.weight, dhidden);
  nn::relu_backward(tr.hidden_pre, dhidden);
  Vector dlatent(model.code_hidden.in_dim());
  nn::dense_backward(model.code_hidden, tr.latent, dhidden, g.code_hidden.weight, dlatent);

  std::vector<Vector> d_fwd(len, Vector(m, 0.0));
  std::vector<Vector> d_bwd(len, Vector(m, 0.0));
  std::copy(dlatent.begin(), dlatent.begin() + static_cast<std::ptrdiff_t>(m), d_fwd.back().begin());
  std::copy(dlatent.begin() + static_cast<std::ptrdiff_t>(m), dlatent.end(), d_bwd.front().begin());

  std::vector<Vector> d_inputs;
  for (std::size_t l = model.blstm.size(); l-- > 0;) {
    nn::blstm_backward(model.blstm[l].forward, model.blstm[l].backward, tr.layer_traces[l], d_fwd,
                       d_bwd, g.blstm[l].forward, g.blstm[l].backward, d_inputs);
    if (l > 0) {
      for (std::size_t t = 0; t < len; ++t) {
        std::copy(d_inputs[t].begin(), d_inputs[t].begin() + static_cast<std::ptrdiff_t>(m),
                  d_fwd[t].begin());
        std::copy(d_inputs[t].begin() + static_cast<std::ptrdiff_t>(m), d_inputs[t].end(),
                  d_bwd[t].begin());
      }
    }
  }

  Vector dmid(model.encoder_out.in_dim());
  Matrix& dw0 = g.encoder_in.weight;
  for (std::size_t t = 0; t < len; ++t) {
    Vector& dembed = d_inputs[t];
    nn::relu_backward(tr.embed_pre[t], dembed);
    nn::dense_backward(model.encoder_out, tr.encoder_mid[t], dembed, g.encoder_out.weight, dmid);
    nn::relu_backward(tr.encoder_pre[t], dmid);
    for (std::size_t r = 0; r < dw0.rows; ++r) {
      if (dmid[r] == 0.0) continue;
      auto row = dw0.row(r);
      for (const auto j : lines[t].on_indices) row[j] += dmid[r];
    }
  }
}

void zero_gate_bias_grads(Stage1Model& g) {
  for (auto& layer : g.blstm) {
    for (auto* cell : {&layer.forward, &layer.backward}) {
      std::fill(cell->input_bias.begin(), cell->input_bias.end(), 0.0);
      std::fill(cell->forget_bias.begin(), cell->forget_bias.end(), 0.0);
      std::fill(cell->output_bias.begin(), cell->output_bias.end(), 0.0);
      std::fill(cell->candidate_bias.begin(), cell->candidate_bias.end(), 0.0);
    }
  }
}

// Applies p -= lr * g on the first `dense_cols` columns and on the listed
// sparse columns (offset by dense_cols), then clears those gradient entries.
// Every other gradient entry is zero by construction, so this equals a full
// SGD step on the tensor.
void sgd_sparse_columns(Matrix& w, Matrix& g, std::size_t dense_cols,
                        const std::vector<std::uint32_t>& columns, double lr) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    auto wr = w.row(r);
    auto gr = g.row(r);
    for (std::size_t c = 0; c < dense_cols; ++c) {
      wr[c] -= lr * gr[c];
      gr[c] = 0.0;
    }
    for (const auto j : columns) {
      wr[dense_cols + j] -= lr * gr[dense_cols + j];
      gr[dense_cols + j] = 0.0;
    }
  }
}

// Factor that brings the gradient's global L2 norm down to `clip_norm`.
// `sparse` names the one matrix whose non-zero entries are confined to the
// first `dense_cols` columns plus the listed ones.
double clip_scale(const std::vector<std::span<double>>& dense, const Matrix* sparse,
                  std::size_t dense_cols, const std::vector<std::uint32_t>& columns,
                  double clip_norm) {
  if (clip_norm <= 0.0) return 1.0;
  double sq = 0.0;
  for (const auto t : dense)
    for (const double v : t) sq += v * v;
  if (sparse) {
    for (std::size_t r = 0; r < sparse->rows; ++r) {
      const auto row = sparse->row(r);
      for (std::size_t c = 0; c < dense_cols; ++c) sq += row[c] * row[c];
      for (const auto j : columns) sq += row[dense_cols + j] * row[dense_cols + j];
    }
  }
  const double norm = std::sqrt(sq);
  return norm > clip_norm ? clip_norm / norm : 1.0;
}

std::vector<std::uint32_t> union_columns(const std::vector<BowVector>& lines) {
  std::vector<std::uint32_t> cols;
  for (const auto& x : lines) cols.insert(cols.end(), x.on_indices.begin(), x.on_indices.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

void zero_fill(std::vector<std::span<double>> tensors) {
  for (auto t : tensors) std::fill(t.begin(), t.end(), 0.0);
}

[[noreturn]] void non_finite(const char* stage, std::size_t epoch, const std::string& id) {
  std::ostringstream msg;
  msg << stage << ": non-finite loss at epoch " << epoch << ", program '" << id << "'";
  throw NumericError(msg.str());
}

}  // namespace

void ModelConfig::validate() const {
  require(embed_dim > 0 && hidden_dim > 0 && blstm_layers > 0 && code_hidden > 0 && line_hidden > 0,
          "ModelConfig: dimensions must be positive");
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "ModelConfig: learning_rate must be positive");
  require(cell_clip >= 0.0 && std::isfinite(cell_clip), "ModelConfig: cell_clip must be >= 0");
  require(clip_norm >= 0.0 && std::isfinite(clip_norm), "ModelConfig: clip_norm must be >= 0");
  require(decision_threshold > 0.0 && decision_threshold < 1.0,
          "ModelConfig: decision_threshold must lie in (0, 1)");
}

Stage1Model Stage1Model::zeros(std::size_t vocab_size, const ModelConfig& config) {
  config.validate();
  require(vocab_size > 0, "Stage1Model: empty vocabulary");
  Stage1Model m;
  m.encoder_in = nn::DenseParams(config.embed_dim, vocab_size);
  m.encoder_out = nn::DenseParams(config.embed_dim, config.embed_dim);
  for (std::size_t l = 0; l < config.blstm_layers; ++l) {
    const std::size_t in = l == 0 ? config.embed_dim : 2 * config.hidden_dim;
    BlstmLayer layer{nn::LstmParams(in, config.hidden_dim), nn::LstmParams(in, config.hidden_dim)};
    layer.forward.cell_clip = layer.backward.cell_clip = config.cell_clip;
    m.blstm.push_back(std::move(layer));
  }
  m.code_hidden = nn::DenseParams(config.code_hidden, 2 * config.hidden_dim);
  m.code_out = nn::DenseParams(2, config.code_hidden);
  return m;
}

std::vector<std::span<double>> Stage1Model::tensors() {
  std::vector<std::span<double>> out{encoder_in.weight.data, encoder_out.weight.data};
  for (auto& layer : blstm) {
    for (auto t : layer.forward.tensors()) out.push_back(t);
    for (auto t : layer.backward.tensors()) out.push_back(t);
  }
  out.push_back(code_hidden.weight.data);
  out.push_back(code_out.weight.data);
  return out;
}

std::vector<std::span<const double>> Stage1Model::tensors() const {
  std::vector<std::span<const double>> out;
  for (auto t : const_cast<Stage1Model*>(this)->tensors()) out.emplace_back(t);
  return out;
}

Stage2Model Stage2Model::zeros(std::size_t vocab_size, const ModelConfig& config) {
  config.validate();
  require(vocab_size > 0, "Stage2Model: empty vocabulary");
  Stage2Model m;
  m.line_hidden = nn::DenseParams(config.line_hidden, 2 * config.hidden_dim + vocab_size);
  m.line_out = nn::DenseParams(2, config.line_hidden);
  return m;
}

std::vector<std::span<double>> Stage2Model::tensors() {
  return {line_hidden.weight.data, line_out.weight.data};
}

std::vector<std::span<const double>> Stage2Model::tensors() const {
  return {line_hidden.weight.data, line_out.weight.data};
}

Stage1Model init_stage1(std::size_t vocab_size, const ModelConfig& config, SplitMix64& rng) {
  Stage1Model m = Stage1Model::zeros(vocab_size, config);
  nn::init_uniform(m.encoder_in.weight, m.encoder_in.in_dim(), rng);
  nn::init_uniform(m.encoder_out.weight, m.encoder_out.in_dim(), rng);
  for (auto& layer : m.blstm) {
    for (auto* cell : {&layer.forward, &layer.backward}) {
      const std::size_t fan_in = cell->input_dim + cell->hidden_dim;
      nn::init_uniform(cell->input_gate, fan_in, rng);
      nn::init_uniform(cell->forget_gate, fan_in, rng);
      nn::init_uniform(cell->output_gate, fan_in, rng);
      nn::init_uniform(cell->candidate, fan_in, rng);
    }
  }
  nn::init_uniform(m.code_hidden.weight, m.code_hidden.in_dim(), rng);
  nn::init_uniform(m.code_out.weight, m.code_out.in_dim(), rng);
  return m;
}

Stage2Model init_stage2(std::size_t vocab_size, const ModelConfig& config, SplitMix64& rng) {
  Stage2Model m = Stage2Model::zeros(vocab_size, config);
  nn::init_uniform(m.line_hidden.weight, m.line_hidden.in_dim(), rng);
  nn::init_uniform(m.line_out.weight, m.line_out.in_dim(), rng);
  return m;
}

nn::Vector encode_line(const Stage1Model& model, const BowVector& x) {
  check_bow(x, model.vocab_size());
  const Vector mid = nn::relu(sparse_columns_sum(model.encoder_in.weight, 0, x));
  return nn::relu(nn::dense_forward(model.encoder_out, mid));
}

Stage1Output stage1_forward(const Stage1Model& model, const std::vector<BowVector>& lines) {
  Stage1Trace tr = stage1_trace(model, lines);
  return {tr.logits, std::move(tr.layer_outputs.back())};
}

std::array<double, 2> stage2_forward(const Stage2Model& model, const nn::BlstmOutput& context,
                                     std::size_t t, const BowVector& x) {
  if (t >= context.forward_states.size()) throw std::out_of_range("stage2_forward: line index out of range");
  const std::size_t m = context.forward_states[t].size();
  const std::size_t vocab_size = model.line_hidden.in_dim() - 2 * m;
  require(model.line_hidden.in_dim() > 2 * m, "stage2_forward: context width mismatch");
  check_bow(x, vocab_size);
  const Vector ctx = concat_states(context, t);
  Vector pre = sparse_columns_sum(model.line_hidden.weight, 2 * m, x);
  for (std::size_t r = 0; r < pre.size(); ++r)
    pre[r] += nn::dot(model.line_hidden.weight.row(r).first(2 * m), ctx);
  const Vector logits = nn::dense_forward(model.line_out, nn::relu(pre));
  return {logits[0], logits[1]};
}

double stage1_loss_and_gradient(const Stage1Model& model, const std::vector<BowVector>& lines,
                                int label, Stage1Model& grads) {
  const Stage1Trace tr = stage1_trace(model, lines);
  const auto ce = nn::softmax_cross_entropy(tr.logits, label);
  stage1_backward(model, lines, tr, ce.dlogits, grads);
  return ce.loss;
}

double stage2_loss_and_gradient(const Stage2Model& model, const nn::BlstmOutput& context,
                                std::size_t t, const BowVector& x, int label, Stage2Model& grads) {
  if (t >= context.forward_states.size()) throw std::out_of_range("stage2: line index out of range");
  const std::size_t m = context.forward_states[t].size();
  const std::size_t vocab_size = model.line_hidden.in_dim() - 2 * m;
  check_bow(x, vocab_size);
  const Vector ctx = concat_states(context, t);
  Vector pre = sparse_columns_sum(model.line_hidden.weight, 2 * m, x);
  for (std::size_t r = 0; r < pre.size(); ++r)
    pre[r] += nn::dot(model.line_hidden.weight.row(r).first(2 * m), ctx);
  const Vector hidden = nn::relu(pre);
  const Vector logits = nn::dense_forward(model.line_out, hidden);
  const auto ce = nn::softmax_cross_entropy(logits, label);

  Vector dhidden(hidden.size());
  nn::dense_backward(model.line_out, hidden, ce.dlogits, grads.line_out.weight, dhidden);
  nn::relu_backward(pre, dhidden);
  Matrix& dw = grads.line_hidden.weight;
  for (std::size_t r = 0; r < dw.rows; ++r) {
    if (dhidden[r] == 0.0) continue;
    auto row = dw.row(r);
    nn::axpy(row.first(2 * m), dhidden[r], ctx);
    for (const auto j : x.on_indices) row[2 * m + j] += dhidden[r];
  }
  return ce.loss;
}

namespace {

void widen_margin(std::span<const double> values, double& margin) {
  for (const double v : values)
    if (v != 0.0) margin = std::min(margin, std::abs(v));
}

}  // namespace

double stage1_relu_margin(const Stage1Model& model, const std::vector<BowVector>& lines) {
  const Stage1Trace tr = stage1_trace(model, lines);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < lines.size(); ++t) {
    widen_margin(tr.encoder_pre[t], margin);
    widen_margin(tr.embed_pre[t], margin);
  }
  for (const auto& layer : tr.layer_traces) {
    for (const auto* dir : {&layer.forward, &layer.backward}) {
      for (const auto& step : *dir) {
        widen_margin(step.g_pre, margin);
        widen_margin(step.c, margin);
      }
    }
  }
  widen_margin(tr.hidden_pre, margin);
  return margin;
}

double stage2_relu_margin(const Stage2Model& model, const nn::BlstmOutput& context, std::size_t t,
                          const BowVector& x) {
  const std::size_t m = context.forward_states[t].size();
  const Vector ctx = concat_states(context, t);
  Vector pre = sparse_columns_sum(model.line_hidden.weight, 2 * m, x);
  for (std::size_t r = 0; r < pre.size(); ++r)
    pre[r] += nn::dot(model.line_hidden.weight.row(r).first(2 * m), ctx);
  double margin = std::numeric_limits<double>::infinity();
  widen_margin(pre, margin);
  return margin;
}

Stage1Training train_stage1(const Corpus& corpus, const Vocabulary& vocab,
                            const ModelConfig& config) {
  config.validate();
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < corpus.programs.size(); ++i)
    (corpus.programs[i].label == 1 ? positives : negatives).push_back(i);
  if (positives.empty() || negatives.empty()) throw DataError("train_stage1: single-class corpus");

  std::vector<std::vector<BowVector>> vectors;
  std::vector<std::vector<std::uint32_t>> columns;
  vectors.reserve(corpus.programs.size());
  for (const auto& p : corpus.programs) {
    vectors.push_back(vectorize_program(vocab, p));
    columns.push_back(union_columns(vectors.back()));
  }

  SplitMix64 rng(config.seed);
  Stage1Training out;
  out.model = init_stage1(vocab.size(), config, rng);
  out.model.vocab_digest = vocab.digest();
  Stage1Model grads = Stage1Model::zeros(vocab.size(), config);

  const bool positives_minor = positives.size() <= negatives.size();
  std::vector<std::size_t>& minority = positives_minor ? positives : negatives;
  std::vector<std::size_t>& majority = positives_minor ? negatives : positives;

  auto params = out.model.tensors();
  auto grad_tensors = grads.tensors();
  // W0 is updated sparsely; everything else goes through sgd_step.
  std::vector<std::span<double>> dense_params(params.begin() + 1, params.end());
  std::vector<std::span<const double>> dense_grads(grad_tensors.begin() + 1, grad_tensors.end());

  for (std::size_t epoch = 0; epoch < config.stage1_epochs; ++epoch) {
    partial_shuffle(std::span<std::size_t>(majority), minority.size(), rng);
    std::vector<std::size_t> order(minority);
    order.insert(order.end(), majority.begin(),
                 majority.begin() + static_cast<std::ptrdiff_t>(minority.size()));
    shuffle(std::span<std::size_t>(order), rng);

    double total = 0.0;
    for (const std::size_t idx : order) {
      const auto& program = corpus.programs[idx];
      const double loss = stage1_loss_and_gradient(out.model, vectors[idx], program.label, grads);
      if (!std::isfinite(loss)) non_finite("train_stage1", epoch, program.id);
      total += loss;
      if (!config.gate_bias) zero_gate_bias_grads(grads);
      const double lr = config.learning_rate *
                        clip_scale(std::vector<std::span<double>>(grad_tensors.begin() + 1,
                                                                  grad_tensors.end()),
                                   &grads.encoder_in.weight, 0, columns[idx], config.clip_norm);
      sgd_sparse_columns(out.model.encoder_in.weight, grads.encoder_in.weight, 0, columns[idx], lr);
      nn::sgd_step(dense_params, dense_grads, lr);
      zero_fill(std::vector<std::span<double>>(grad_tensors.begin() + 1, grad_tensors.end()));
    }
    out.loss_history.push_back(total / static_cast<double>(order.size()));
  }
  return out;
}

Stage2Training train_stage2(const Corpus& corpus, const Vocabulary& vocab,
                            const Stage1Model& stage1, const ModelConfig& config) {
  config.validate();
  if (stage1.vocab_digest != vocab.digest())
    throw DataError("train_stage2: vocabulary digest mismatch with stage-1 model");

  struct LineRef {
    std::size_t program;  // index into `contexts`
    std::size_t line;
  };
  std::vector<nn::BlstmOutput> contexts;
  std::vector<const std::string*> ids;
  std::vector<std::vector<BowVector>> vectors;
  std::vector<LineRef> vulnerable, good;
  for (const auto& p : corpus.programs) {
    if (p.label != 1) continue;
    vectors.push_back(vectorize_program(vocab, p));
    contexts.push_back(stage1_forward(stage1, vectors.back()).blstm);
    ids.push_back(&p.id);
    const std::size_t k = contexts.size() - 1;
    for (std::size_t t = 0; t < p.lines.size(); ++t)
      (p.line_label(t) ? vulnerable : good).push_back({k, t});
  }
  if (contexts.empty()) throw DataError("train_stage2: no vulnerable programs");

  SplitMix64 rng(config.seed ^ kStage2StreamSalt);
  Stage2Training out;
  out.model = init_stage2(vocab.size(), config, rng);
  out.model.vocab_digest = vocab.digest();
  Stage2Model grads = Stage2Model::zeros(vocab.size(), config);
  const std::size_t ctx_width = 2 * config.hidden_dim;

  for (std::size_t epoch = 0; epoch < config.stage2_epochs; ++epoch) {
    const std::size_t take = std::min(vulnerable.size(), good.size());
    partial_shuffle(std::span<LineRef>(good), take, rng);
    std::vector<std::pair<LineRef, int>> order;
    order.reserve(vulnerable.size() + take);
    for (const auto& ref : vulnerable) order.push_back({ref, 1});
    for (std::size_t i = 0; i < take; ++i) order.push_back({good[i], 0});
    shuffle(std::span<std::pair<LineRef, int>>(order), rng);

    double total = 0.0;
    for (const auto& [ref, label] : order) {
      const BowVector& x = vectors[ref.program][ref.line];
      const double loss =
          stage2_loss_and_gradient(out.model, contexts[ref.program], ref.line, x, label, grads);
      if (!std::isfinite(loss)) non_finite("train_stage2", epoch, *ids[ref.program]);
      total += loss;
      const double lr =
          config.learning_rate * clip_scale({grads.line_out.weight.data}, &grads.line_hidden.weight,
                                            ctx_width, x.on_indices, config.clip_norm);
      sgd_sparse_columns(out.model.line_hidden.weight, grads.line_hidden.weight, ctx_width,
                         x.on_indices, lr);
      auto& w5 = out.model.line_out.weight.data;
      auto& g5 = grads.line_out.weight.data;
      for (std::size_t i = 0; i < w5.size(); ++i) {
        w5[i] -= lr * g5[i];
        g5[i] = 0.0;
      }
    }
    out.loss_history.push_back(total / static_cast<double>(order.size()));
    out.samples_per_epoch.push_back(order.size());
  }
  return out;
}

Prediction predict(const Stage1Model& stage1, const Stage2Model& stage2, const Vocabulary& vocab,
                   const Program& program, double threshold) {
  if (stage1.vocab_digest != vocab.digest() || stage2.vocab_digest != vocab.digest())
    throw DataError("predict: vocabulary digest mismatch");
  const auto lines = vectorize_program(vocab, program);
  const auto s1 = stage1_forward(stage1, lines);

  Prediction out;
  out.program_id = program.id;
  out.code_probability = nn::softmax2(s1.logits)[1];
  out.code_vulnerable = out.code_probability >= threshold;
  out.line_flags.resize(lines.size(), false);
  out.line_probabilities.resize(lines.size());
  for (std::size_t t = 0; t < lines.size(); ++t) {
    const auto logits = stage2_forward(stage2, s1.blstm, t, lines[t]);
    out.line_probabilities[t] = nn::softmax2(logits)[1];
    out.line_flags[t] = out.code_vulnerable && out.line_probabilities[t] >= threshold;
  }
  return out;
}

}  // namespace irvuln
