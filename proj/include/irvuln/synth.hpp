#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irvuln/corpus.hpp"

namespace irvuln {

/// Tokens of the planted motif. A source call defines a register, optional
/// getelementptr lines derive new registers from it, and a sink call consumes
/// the last one. Only the sink line is labeled vulnerable.
inline constexpr const char* kSourceCallee = "@read_untrusted()";
inline constexpr const char* kSinkCallee = "@copy_unbounded(i8*";

struct SynthConfig {
  std::size_t program_count = 2000;
  double vulnerable_fraction = 0.3;
  std::size_t min_lines = 8;
  std::size_t max_lines = 60;
  std::size_t token_pool_size = 400;
  std::size_t motif_span = 3;  // lines in the source -> sink chain
  std::uint64_t seed = 42;
  bool with_user_functions = false;  // inject call/define pairs for stripping

  /// Throws std::invalid_argument when the configuration cannot be generated.
  void validate() const;
};

/// Vulnerable programs carry the motif in order. Clean programs are drawn
/// evenly from four shapes: no motif, source chain without a sink, a sink
/// without a source, and a sink placed before an unrelated source chain.
/// Register reuse between lines is random and long-range. Deterministic in
/// the seed.
Corpus generate_corpus(const SynthConfig& config);

struct TaintScan {
  std::vector<std::size_t> tainted_sinks;  // sink lines fed by the source
  bool has_source = false;
  bool has_sink = false;
};

/// Follows registers from every source line through any defining line that
/// reads a tainted register, then reports sink lines reading one.
TaintScan scan_taint(const Program& program);

}  // namespace irvuln
