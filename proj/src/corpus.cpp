#include "irvuln/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "irvuln/error.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln {

namespace {

using nlohmann::json;

bool is_call_line(const std::string& line) {
  const auto tokens = tokenize(line);
  return std::find(tokens.begin(), tokens.end(), "call") != tokens.end();
}

bool is_define_line(const std::string& line) {
  const auto tokens = tokenize(line);
  return !tokens.empty() && tokens.front() == "define";
}

[[noreturn]] void fail_record(const std::string& source, std::size_t line_no,
                              const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line_no << ": " << what;
  throw DataError(msg.str());
}

Program parse_record(const json& record, const std::string& source, std::size_t line_no) {
  if (!record.is_object()) fail_record(source, line_no, "record is not a JSON object");
  for (const auto& [key, value] : record.items()) {
    if (key != "id" && key != "lines" && key != "label" && key != "vulnerable_lines")
      fail_record(source, line_no, "unknown field '" + key + "'");
  }
  for (const char* key : {"id", "lines", "label", "vulnerable_lines"}) {
    if (!record.contains(key)) fail_record(source, line_no, std::string("missing field '") + key + "'");
  }

  Program program;
  const auto& id = record.at("id");
  if (!id.is_string()) fail_record(source, line_no, "'id' must be a string");
  program.id = id.get<std::string>();

  const auto& lines = record.at("lines");
  if (!lines.is_array()) fail_record(source, line_no, "'lines' must be an array of strings");
  for (const auto& line : lines) {
    if (!line.is_string()) fail_record(source, line_no, "'lines' must be an array of strings");
    auto text = line.get<std::string>();
    if (text.find_first_of("\r\n") != std::string::npos)
      fail_record(source, line_no, "line text contains a line break");
    program.lines.push_back(std::move(text));
  }

  const auto& label = record.at("label");
  if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1))
    fail_record(source, line_no, "'label' must be the integer 0 or 1");
  program.label = label.get<int>();

  const auto& vulnerable = record.at("vulnerable_lines");
  if (!vulnerable.is_array()) fail_record(source, line_no, "'vulnerable_lines' must be an array");
  for (const auto& index : vulnerable) {
    if (!index.is_number_integer() || index.get<long long>() < 0)
      fail_record(source, line_no, "'vulnerable_lines' entries must be non-negative integers");
    program.vulnerable_lines.push_back(index.get<std::size_t>());
  }
  std::sort(program.vulnerable_lines.begin(), program.vulnerable_lines.end());

  try {
    validate_program(program);
  } catch (const DataError& e) {
    fail_record(source, line_no, e.what());
  }
  return program;
}

}  // namespace

bool Program::line_label(std::size_t t) const {
  return std::binary_search(vulnerable_lines.begin(), vulnerable_lines.end(), t);
}

void validate_program(const Program& program) {
  const std::string where = "program '" + program.id + "': ";
  if (program.lines.empty()) throw DataError(where + "empty program");
  if (program.label != 0 && program.label != 1) throw DataError(where + "label must be 0 or 1");
  if (!std::is_sorted(program.vulnerable_lines.begin(), program.vulnerable_lines.end()))
    throw DataError(where + "vulnerable_lines not sorted");
  if (std::adjacent_find(program.vulnerable_lines.begin(), program.vulnerable_lines.end()) !=
      program.vulnerable_lines.end())
    throw DataError(where + "duplicate vulnerable line index");
  for (const std::size_t index : program.vulnerable_lines) {
    if (index >= program.lines.size())
      throw DataError(where + "vulnerable line index out of range (" + std::to_string(index) +
                      " >= " + std::to_string(program.lines.size()) + ")");
  }
  if (program.label == 0 && !program.vulnerable_lines.empty())
    throw DataError(where + "inconsistent labels: label 0 with vulnerable lines");
  if (program.label == 1 && program.vulnerable_lines.empty())
    throw DataError(where + "inconsistent labels: label 1 without vulnerable lines");
}

void validate_corpus(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (const auto& program : corpus.programs) {
    validate_program(program);
    if (!seen.insert(program.id).second) throw DataError("duplicate id '" + program.id + "'");
  }
}

Corpus read_corpus(std::istream& in, const std::string& source_name) {
  Corpus corpus;
  corpus.provenance = source_name;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(text);
    } catch (const json::parse_error& e) {
      fail_record(source_name, line_no, std::string("malformed JSON: ") + e.what());
    }
    Program program = parse_record(record, source_name, line_no);
    if (!seen.insert(program.id).second)
      fail_record(source_name, line_no, "duplicate id '" + program.id + "'");
    corpus.programs.push_back(std::move(program));
  }
  if (corpus.programs.empty()) throw DataError(source_name + ": empty corpus");
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_corpus(in, path.string());
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& program : corpus.programs) {
    nlohmann::ordered_json record;
    record["id"] = program.id;
    record["lines"] = program.lines;
    record["label"] = program.label;
    record["vulnerable_lines"] = program.vulnerable_lines;
    out << record.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_corpus(corpus, out);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::vector<std::string> strip_user_functions(const std::vector<std::string>& lines,
                                              std::vector<std::size_t>& kept_indices) {
  std::vector<std::string> current = lines;
  kept_indices.resize(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) kept_indices[i] = i;

  // A removal can make a new call/define pair adjacent, so iterate to a fixpoint.
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::string> next;
    std::vector<std::size_t> next_indices;
    next.reserve(current.size());
    next_indices.reserve(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (i + 1 < current.size() && is_call_line(current[i]) && is_define_line(current[i + 1])) {
        ++i;
        changed = true;
        continue;
      }
      next.push_back(std::move(current[i]));
      next_indices.push_back(kept_indices[i]);
    }
    current = std::move(next);
    kept_indices = std::move(next_indices);
  }
  return current;
}

std::vector<std::string> strip_user_functions(const std::vector<std::string>& lines) {
  std::vector<std::size_t> unused;
  return strip_user_functions(lines, unused);
}

std::optional<Program> filter_by_length(const Program& program, std::size_t max_lines) {
  if (program.lines.size() < max_lines) return program;
  return std::nullopt;
}

Corpus prepare_corpus(const Corpus& corpus, std::size_t max_lines, PrepareStats* stats) {
  if (max_lines == 0) throw std::invalid_argument("max_lines must be positive");
  PrepareStats local;
  local.input_programs = corpus.programs.size();

  Corpus out;
  out.provenance = corpus.provenance;
  for (const auto& program : corpus.programs) {
    std::vector<std::size_t> kept;
    Program stripped;
    stripped.id = program.id;
    stripped.label = program.label;
    stripped.lines = strip_user_functions(program.lines, kept);

    // kept is increasing, so a binary search maps old indices to new positions.
    for (const std::size_t old_index : program.vulnerable_lines) {
      const auto it = std::lower_bound(kept.begin(), kept.end(), old_index);
      if (it != kept.end() && *it == old_index)
        stripped.vulnerable_lines.push_back(static_cast<std::size_t>(it - kept.begin()));
      else
        ++local.lost_vulnerable_lines;
    }

    if (stripped.lines.empty()) {
      ++local.dropped_empty;
      continue;
    }
    if (stripped.label == 1 && stripped.vulnerable_lines.empty()) {
      ++local.dropped_unannotated;
      continue;
    }
    auto filtered = filter_by_length(stripped, max_lines);
    if (!filtered) {
      ++local.dropped_too_long;
      continue;
    }
    out.programs.push_back(std::move(*filtered));
  }
  if (stats) *stats = local;
  if (out.programs.empty()) throw DataError("empty corpus after preprocessing");
  return out;
}

}  // namespace irvuln
