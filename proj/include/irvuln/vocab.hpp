#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irvuln/corpus.hpp"

namespace irvuln {

/// Splits on single spaces, dropping empty fragments. Tokens keep attached
/// punctuation ("0," stays "0,").
std::vector<std::string> tokenize(std::string_view line);

/// Token table in first-occurrence order. Immutable once built.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws DataError on duplicate or malformed tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Position of `token`, or -1 when absent.
  std::int64_t find(const std::string& token) const;

  /// Bytes of the vocabulary file: each token followed by '\n'.
  std::string serialize() const;
  /// FNV-1a over serialize().
  std::uint64_t digest() const { return digest_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t digest_ = 0;
};

/// Sparse binary line vector. on_indices is strictly increasing.
struct BowVector {
  std::size_t dimension = 0;
  std::vector<std::uint32_t> on_indices;

  bool operator==(const BowVector&) const = default;
};

Vocabulary build_vocabulary(const Corpus& corpus);

Vocabulary read_vocabulary(std::istream& in, const std::string& source_name);
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);

/// Out-of-vocabulary tokens contribute nothing.
BowVector vectorize_line(const Vocabulary& vocab, std::string_view line);
std::vector<BowVector> vectorize_program(const Vocabulary& vocab, const Program& program);

}  // namespace irvuln
