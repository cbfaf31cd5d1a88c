#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace irvuln {

inline constexpr std::size_t kDefaultMaxLines = 265;

/// One IR slice with its whole-code label and zero-based vulnerable line indices.
struct Program {
  std::string id;
  std::vector<std::string> lines;
  int label = 0;
  std::vector<std::size_t> vulnerable_lines;  // sorted, unique

  bool line_label(std::size_t t) const;
  bool operator==(const Program&) const = default;
};

struct Corpus {
  std::vector<Program> programs;
  std::string provenance;
};

/// Throws DataError describing the first violated Program invariant.
void validate_program(const Program& program);

/// Throws DataError on duplicate ids or any invalid program.
void validate_corpus(const Corpus& corpus);

Corpus load_corpus(const std::filesystem::path& path);
Corpus read_corpus(std::istream& in, const std::string& source_name);

/// One compact JSON object per line, fields in the order id, lines, label,
/// vulnerable_lines.
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Removes every "call" line immediately followed by a "define" line together
/// with that define line; repeats until no such pair remains.
std::vector<std::string> strip_user_functions(const std::vector<std::string>& lines);

/// Same as above, but also returns the original index of each kept line.
std::vector<std::string> strip_user_functions(const std::vector<std::string>& lines,
                                              std::vector<std::size_t>& kept_indices);

std::optional<Program> filter_by_length(const Program& program,
                                        std::size_t max_lines = kDefaultMaxLines);

struct PrepareStats {
  std::size_t input_programs = 0;
  std::size_t lost_vulnerable_lines = 0;     // annotated lines removed by stripping
  std::size_t dropped_unannotated = 0;       // label 1 with every annotated line stripped
  std::size_t dropped_empty = 0;             // nothing left after stripping
  std::size_t dropped_too_long = 0;
};

Corpus prepare_corpus(const Corpus& corpus, std::size_t max_lines = kDefaultMaxLines,
                      PrepareStats* stats = nullptr);

}  // namespace irvuln
