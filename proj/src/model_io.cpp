#include "irvuln/model_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "irvuln/error.hpp"
#include "irvuln/hash.hpp"

namespace irvuln {

namespace {

class Writer {
 public:
  void bytes(std::string_view b) { out_ += b; }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }
  const std::string& buffer() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) throw DataError("model file corrupted: unexpected end of data");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  for (const std::uint64_t v :
       {std::uint64_t{c.embed_dim}, std::uint64_t{c.hidden_dim}, std::uint64_t{c.blstm_layers},
        std::uint64_t{c.code_hidden}, std::uint64_t{c.line_hidden},
        std::uint64_t{c.stage1_epochs}, std::uint64_t{c.stage2_epochs}, c.seed})
    w.u64(v);
  w.f64(c.learning_rate);
  w.f64(c.decision_threshold);
  w.f64(c.clip_norm);
  w.f64(c.cell_clip);
  w.u8(c.gate_bias ? 1 : 0);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.embed_dim = r.u64();
  c.hidden_dim = r.u64();
  c.blstm_layers = r.u64();
  c.code_hidden = r.u64();
  c.line_hidden = r.u64();
  c.stage1_epochs = r.u64();
  c.stage2_epochs = r.u64();
  c.seed = r.u64();
  c.learning_rate = r.f64();
  c.decision_threshold = r.f64();
  c.clip_norm = r.f64();
  c.cell_clip = r.f64();
  const auto bias = r.u8();
  if (bias > 1) throw DataError("model file corrupted: bad gate_bias flag");
  c.gate_bias = bias == 1;
  // Guard the allocations below against absurd headers.
  constexpr std::uint64_t kMaxDim = 1u << 20;
  if (c.embed_dim > kMaxDim || c.hidden_dim > kMaxDim || c.blstm_layers > 1024 ||
      c.code_hidden > kMaxDim || c.line_hidden > kMaxDim)
    throw DataError("model file dimension inconsistency: implausible configuration");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("model file dimension inconsistency: ") + e.what());
  }
  return c;
}

// Shapes of every tensor in serialization order.
std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const Stage1Model& s1,
                                                               const Stage2Model& s2) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  shapes.emplace_back(s1.encoder_in.weight.rows, s1.encoder_in.weight.cols);
  shapes.emplace_back(s1.encoder_out.weight.rows, s1.encoder_out.weight.cols);
  for (const auto& layer : s1.blstm) {
    for (const auto* cell : {&layer.forward, &layer.backward}) {
      for (const auto* m : {&cell->input_gate, &cell->forget_gate, &cell->output_gate, &cell->candidate})
        shapes.emplace_back(m->rows, m->cols);
      for (int b = 0; b < 4; ++b) shapes.emplace_back(cell->hidden_dim, 1);
    }
  }
  shapes.emplace_back(s1.code_hidden.weight.rows, s1.code_hidden.weight.cols);
  shapes.emplace_back(s1.code_out.weight.rows, s1.code_out.weight.cols);
  shapes.emplace_back(s2.line_hidden.weight.rows, s2.line_hidden.weight.cols);
  shapes.emplace_back(s2.line_out.weight.rows, s2.line_out.weight.cols);
  return shapes;
}

}  // namespace

std::string serialize_model(const Stage1Model& stage1, const Stage2Model& stage2,
                            const Vocabulary& vocab, const ModelConfig& config) {
  if (stage1.vocab_digest != vocab.digest() || stage2.vocab_digest != vocab.digest())
    throw DataError("save_model: vocabulary digest mismatch");
  if (tensor_shapes(stage1, stage2) !=
      tensor_shapes(Stage1Model::zeros(vocab.size(), config), Stage2Model::zeros(vocab.size(), config)))
    throw std::invalid_argument("save_model: model shapes do not match config and vocabulary");

  Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelFormatVersion);
  write_config(w, config);
  w.u64(vocab.digest());
  w.u64(vocab.size());
  for (const auto& token : vocab.tokens()) {
    w.u64(token.size());
    w.bytes(token);
  }

  const auto shapes = tensor_shapes(stage1, stage2);
  auto tensors = stage1.tensors();
  for (auto t : stage2.tensors()) tensors.push_back(t);
  w.u64(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.u64(shapes[i].first);
    w.u64(shapes[i].second);
    for (const double v : tensors[i]) w.f64(v);
  }
  w.u64(fnv1a64(w.buffer()));
  return w.take();
}

ModelBundle deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kModelMagic.size() || r.bytes(kModelMagic.size()) != kModelMagic)
    throw DataError("model file corrupted: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw DataError("unsupported version " + std::to_string(version) + " (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  if (bytes.size() < kModelMagic.size() + 4 + 8) throw DataError("model file corrupted: truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a64(body)) throw DataError("model file corrupted: digest mismatch");

  ModelBundle out;
  out.config = read_config(r);
  const std::uint64_t vocab_digest = r.u64();
  const std::uint64_t token_count = r.u64();
  if (token_count == 0 || token_count > r.remaining())
    throw DataError("model file dimension inconsistency: bad vocabulary size");
  std::vector<std::string> tokens;
  tokens.reserve(token_count);
  for (std::uint64_t i = 0; i < token_count; ++i) {
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw DataError("model file corrupted: token overruns file");
    tokens.emplace_back(r.bytes(len));
  }
  out.vocab = Vocabulary(std::move(tokens));
  if (out.vocab.digest() != vocab_digest)
    throw DataError("model file corrupted: vocabulary digest mismatch");

  out.stage1 = Stage1Model::zeros(out.vocab.size(), out.config);
  out.stage2 = Stage2Model::zeros(out.vocab.size(), out.config);
  out.stage1.vocab_digest = vocab_digest;
  out.stage2.vocab_digest = vocab_digest;
  const auto shapes = tensor_shapes(out.stage1, out.stage2);
  auto tensors = out.stage1.tensors();
  for (auto t : out.stage2.tensors()) tensors.push_back(t);

  if (r.u64() != tensors.size())
    throw DataError("model file dimension inconsistency: tensor count");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows != shapes[i].first || cols != shapes[i].second) {
      std::ostringstream msg;
      msg << "model file dimension inconsistency: tensor " << i << " is " << rows << "x" << cols
          << ", expected " << shapes[i].first << "x" << shapes[i].second;
      throw DataError(msg.str());
    }
    for (double& v : tensors[i]) v = r.f64();
  }
  if (r.remaining() != 8) throw DataError("model file corrupted: trailing bytes");
  return out;
}

void save_model(const Stage1Model& stage1, const Stage2Model& stage2, const Vocabulary& vocab,
                const ModelConfig& config, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(stage1, stage2, vocab, config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_model(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace irvuln
