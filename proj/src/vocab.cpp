#include "irvuln/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "irvuln/error.hpp"
#include "irvuln/hash.hpp"

namespace irvuln {

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t end = std::min(line.find(' ', start), line.size());
    if (end > start) tokens.emplace_back(line.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& token = tokens_[i];
    if (token.empty() || token.find_first_of(" \r\n") != std::string::npos)
      throw DataError("invalid vocabulary token at position " + std::to_string(i));
    if (!index_.emplace(token, i).second)
      throw DataError("duplicate vocabulary token '" + token + "'");
  }
  digest_ = fnv1a64(serialize());
}

std::int64_t Vocabulary::find(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::string Vocabulary::serialize() const {
  std::string bytes;
  for (const auto& token : tokens_) {
    bytes += token;
    bytes += '\n';
  }
  return bytes;
}

Vocabulary build_vocabulary(const Corpus& corpus) {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& program : corpus.programs) {
    for (const auto& line : program.lines) {
      for (auto& token : tokenize(line)) {
        if (seen.emplace(token, tokens.size()).second) tokens.push_back(std::move(token));
      }
    }
  }
  if (tokens.empty()) throw DataError("corpus yields zero tokens");
  return Vocabulary(std::move(tokens));
}

Vocabulary read_vocabulary(std::istream& in, const std::string& source_name) {
  std::vector<std::string> tokens;
  std::string token;
  std::size_t line_no = 0;
  while (std::getline(in, token)) {
    ++line_no;
    if (token.empty())
      throw DataError(source_name + ":" + std::to_string(line_no) + ": empty vocabulary token");
    tokens.push_back(std::move(token));
  }
  if (tokens.empty()) throw DataError(source_name + ": empty vocabulary");
  try {
    return Vocabulary(std::move(tokens));
  } catch (const DataError& e) {
    throw DataError(source_name + ": " + e.what());
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary '" + path.string() + "'");
  return read_vocabulary(in, path.string());
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << vocab.serialize();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

BowVector vectorize_line(const Vocabulary& vocab, std::string_view line) {
  BowVector vec;
  vec.dimension = vocab.size();
  for (const auto& token : tokenize(line)) {
    const auto pos = vocab.find(token);
    if (pos >= 0) vec.on_indices.push_back(static_cast<std::uint32_t>(pos));
  }
  std::sort(vec.on_indices.begin(), vec.on_indices.end());
  vec.on_indices.erase(std::unique(vec.on_indices.begin(), vec.on_indices.end()),
                       vec.on_indices.end());
  return vec;
}

std::vector<BowVector> vectorize_program(const Vocabulary& vocab, const Program& program) {
  std::vector<BowVector> out;
  out.reserve(program.lines.size());
  for (const auto& line : program.lines) out.push_back(vectorize_line(vocab, line));
  return out;
}

}  // namespace irvuln
