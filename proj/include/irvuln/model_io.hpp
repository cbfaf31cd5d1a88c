#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "irvuln/detector.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln {

inline constexpr std::string_view kModelMagic = "IRVULN01";
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  Stage1Model stage1;
  Stage2Model stage2;
};

/// Layout, all integers little-endian:
///   magic "IRVULN01" | u32 version
///   config: u64 embed_dim, hidden_dim, blstm_layers, code_hidden, line_hidden,
///           stage1_epochs, stage2_epochs, seed | f64 learning_rate,
///           decision_threshold, clip_norm, cell_clip | u8 gate_bias
///   u64 vocabulary digest | u64 token count | per token: u64 length, bytes
///   u64 tensor count | per tensor: u64 rows, u64 cols, rows*cols f64 row-major
///   u64 FNV-1a of every preceding byte
/// Tensors follow Stage1Model::tensors() then Stage2Model::tensors().
std::string serialize_model(const Stage1Model& stage1, const Stage2Model& stage2,
                            const Vocabulary& vocab, const ModelConfig& config);

/// Throws DataError ("corrupted", "unsupported version", dimension errors).
ModelBundle deserialize_model(std::string_view bytes);

void save_model(const Stage1Model& stage1, const Stage2Model& stage2, const Vocabulary& vocab,
                const ModelConfig& config, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace irvuln
