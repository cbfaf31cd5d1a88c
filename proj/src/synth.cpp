#include "irvuln/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "irvuln/error.hpp"
#include "irvuln/rng.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln {

namespace {

constexpr const char* kTypes[] = {"i8", "i16", "i32", "i64"};
constexpr const char* kAligns[] = {"1", "2", "4", "8"};

enum class Shape { Vulnerable, Plain, SourceOnly, SinkOnly, Reversed };

std::string reg(std::size_t r) { return "%" + std::to_string(r); }

// Strips one trailing ',' or ')' so "%3," and "%3)" both name register %3.
std::string register_name(const std::string& token) {
  if (token.empty() || token[0] != '%') return {};
  std::string name = token;
  while (!name.empty() && (name.back() == ',' || name.back() == ')')) name.pop_back();
  return name;
}

class ProgramBuilder {
 public:
  ProgramBuilder(const SynthConfig& config, SplitMix64& rng) : config_(config), rng_(rng) {}

  std::string pool_token() {
    const std::size_t k = rng_.below(config_.token_pool_size);
    return k % 2 == 0 ? std::to_string(k / 2) : "@g" + std::to_string(k / 2);
  }
  std::string type() { return kTypes[rng_.below(4)]; }
  std::string align() { return kAligns[rng_.below(4)]; }
  std::string used_register() { return reg(defined_[rng_.below(defined_.size())]); }
  std::size_t fresh_register() {
    defined_.push_back(next_++);
    return defined_.back();
  }

  std::string filler() {
    switch (rng_.below(8)) {
      case 0: {
        const auto t = type();
        const auto a = align();
        return reg(fresh_register()) + " = alloca " + t + ", align " + a;
      }
      case 1: {
        const auto t = type();
        const auto src = used_register();
        const auto a = align();
        return reg(fresh_register()) + " = load " + t + ", " + t + "* " + src + ", align " + a;
      }
      case 2: {
        const auto t = type();
        const auto v = used_register();
        const auto p = used_register();
        return "store " + t + " " + v + ", " + t + "* " + p + ", align " + align();
      }
      case 3: {
        const auto t = type();
        const auto v = used_register();
        const auto k = pool_token();
        return reg(fresh_register()) + " = add nsw " + t + " " + v + ", " + k;
      }
      case 4: {
        const auto t = type();
        const auto v = used_register();
        const auto k = pool_token();
        return reg(fresh_register()) + " = getelementptr inbounds " + t + ", " + t + "* " + v +
               ", i64 " + k;
      }
      case 5: {
        const auto t = type();
        const auto v = used_register();
        const auto k = pool_token();
        return reg(fresh_register()) + " = icmp slt " + t + " " + v + ", " + k;
      }
      case 6: {
        const auto t = type();
        const auto callee = "@g" + std::to_string(rng_.below(config_.token_pool_size / 2 + 1));
        const auto v = used_register();
        return reg(fresh_register()) + " = call " + t + " " + callee + "(" + t + " " + v + ")";
      }
      default: {
        const auto t = type();
        const auto v = used_register();
        return reg(fresh_register()) + " = bitcast " + t + "* " + v + " to i8*";
      }
    }
  }

  std::string source() {
    chain_ = fresh_register();
    return reg(chain_) + " = call i8* " + kSourceCallee;
  }
  std::string propagate() {
    const std::size_t from = chain_;
    chain_ = fresh_register();
    return reg(chain_) + " = getelementptr inbounds i8, i8* " + reg(from) + ", i64 " + pool_token();
  }
  std::string sink(const std::string& operand) {
    return std::string("call void ") + kSinkCallee + " " + operand + ", i64 " + used_register() + ")";
  }
  std::string chained_sink() { return sink(reg(chain_)); }
  std::string direct_sink() { return sink(kSourceCallee); }

 private:
  const SynthConfig& config_;
  SplitMix64& rng_;
  std::vector<std::size_t> defined_{0};  // %0 stands for the incoming argument
  std::size_t next_ = 1;
  std::size_t chain_ = 0;
};

std::vector<std::size_t> sorted_positions(std::size_t count, std::size_t length, SplitMix64& rng) {
  std::vector<std::size_t> all(length);
  for (std::size_t i = 0; i < length; ++i) all[i] = i;
  partial_shuffle(std::span<std::size_t>(all), count, rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

Program build_program(const SynthConfig& config, Shape shape, std::string id, SplitMix64& rng) {
  const std::size_t length =
      config.min_lines + rng.below(config.max_lines - config.min_lines + 1);
  const std::size_t span = config.motif_span;

  // Role of each motif position, in line order.
  enum class Role { Source, Propagate, ChainedSink, DirectSink, UnlinkedSink };
  std::vector<Role> roles;
  switch (shape) {
    case Shape::Vulnerable:
      if (span == 1) {
        roles = {Role::DirectSink};
      } else {
        roles.push_back(Role::Source);
        roles.insert(roles.end(), span - 2, Role::Propagate);
        roles.push_back(Role::ChainedSink);
      }
      break;
    case Shape::Plain:
      break;
    case Shape::SourceOnly:
      roles.push_back(Role::Source);
      if (span > 1) roles.insert(roles.end(), span - 2, Role::Propagate);
      break;
    case Shape::SinkOnly:
      roles = {Role::UnlinkedSink};
      break;
    case Shape::Reversed:
      roles.push_back(Role::UnlinkedSink);
      roles.push_back(Role::Source);
      if (span > 2) roles.insert(roles.end(), span - 2, Role::Propagate);
      break;
  }
  const auto positions = sorted_positions(roles.size(), length, rng);

  Program p;
  p.id = std::move(id);
  p.label = shape == Shape::Vulnerable ? 1 : 0;
  ProgramBuilder b(config, rng);
  std::size_t next_role = 0;
  for (std::size_t t = 0; t < length; ++t) {
    if (next_role < roles.size() && positions[next_role] == t) {
      switch (roles[next_role++]) {
        case Role::Source: p.lines.push_back(b.source()); break;
        case Role::Propagate: p.lines.push_back(b.propagate()); break;
        case Role::ChainedSink:
          p.lines.push_back(b.chained_sink());
          p.vulnerable_lines.push_back(t);
          break;
        case Role::DirectSink:
          p.lines.push_back(b.direct_sink());
          p.vulnerable_lines.push_back(t);
          break;
        case Role::UnlinkedSink: p.lines.push_back(b.sink(b.used_register())); break;
      }
    } else {
      p.lines.push_back(b.filler());
    }
  }
  return p;
}

// Inserts adjacent call/define pairs; the stripping pass removes exactly these.
void inject_user_functions(Program& p, SplitMix64& rng) {
  const std::size_t pairs = rng.below(3);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t at = rng.below(p.lines.size() + 1);
    const std::string name = "@user_fn" + std::to_string(rng.below(50));
    p.lines.insert(p.lines.begin() + static_cast<std::ptrdiff_t>(at),
                   {"%u" + std::to_string(k) + " = call i32 " + name + "(i32 %0)",
                    "define i32 " + name + "(i32 %a) {"});
    for (auto& v : p.vulnerable_lines)
      if (v >= at) v += 2;
  }
}

void self_check(const Program& p) {
  const auto scan = scan_taint(p);
  const bool ok = p.label == 1 ? scan.tainted_sinks == p.vulnerable_lines
                               : scan.tainted_sinks.empty();
  if (!ok) throw std::logic_error("synthetic generator self-check failed for " + p.id);
}

}  // namespace

void SynthConfig::validate() const {
  if (program_count == 0) throw std::invalid_argument("program_count must be positive");
  if (!(vulnerable_fraction > 0.0 && vulnerable_fraction < 1.0))
    throw std::invalid_argument("vulnerable_fraction must lie in (0, 1)");
  if (min_lines == 0 || min_lines > max_lines)
    throw std::invalid_argument("lines range must satisfy 1 <= min <= max");
  if (max_lines >= kDefaultMaxLines) throw std::invalid_argument("max_lines must be below 265");
  if (motif_span == 0) throw std::invalid_argument("motif_span must be at least 1");
  if (std::max<std::size_t>(motif_span, 2) > min_lines)
    throw std::invalid_argument("config infeasible: motif_span exceeds the minimum program length");
  if (token_pool_size == 0) throw std::invalid_argument("token_pool_size must be positive");
}

Corpus generate_corpus(const SynthConfig& config) {
  config.validate();
  SplitMix64 master(config.seed);
  const auto vulnerable = static_cast<std::size_t>(
      std::llround(config.vulnerable_fraction * static_cast<double>(config.program_count)));

  std::vector<Shape> shapes(config.program_count);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i < vulnerable) {
      shapes[i] = Shape::Vulnerable;
    } else {
      constexpr Shape kClean[] = {Shape::Plain, Shape::SourceOnly, Shape::SinkOnly, Shape::Reversed};
      shapes[i] = kClean[(i - vulnerable) % 4];
    }
  }
  shuffle(std::span<Shape>(shapes), master);

  Corpus corpus;
  corpus.provenance = "synth seed=" + std::to_string(config.seed);
  SplitMix64 inject_rng = master.split();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    SplitMix64 rng = master.split();
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", i);
    Program p = build_program(config, shapes[i], id, rng);
    self_check(p);
    if (config.with_user_functions) inject_user_functions(p, inject_rng);
    corpus.programs.push_back(std::move(p));
  }
  validate_corpus(corpus);
  return corpus;
}

TaintScan scan_taint(const Program& program) {
  TaintScan scan;
  std::unordered_set<std::string> tainted;
  for (std::size_t t = 0; t < program.lines.size(); ++t) {
    const auto tokens = tokenize(program.lines[t]);
    const bool is_source = std::find(tokens.begin(), tokens.end(), kSourceCallee) != tokens.end();
    const auto sink_at = std::find(tokens.begin(), tokens.end(), kSinkCallee);
    scan.has_source = scan.has_source || is_source;
    if (sink_at != tokens.end()) {
      scan.has_sink = true;
      const auto operand = std::next(sink_at);
      if (operand != tokens.end() &&
          (*operand == std::string(kSourceCallee) + "," || tainted.count(register_name(*operand))))
        scan.tainted_sinks.push_back(t);
      continue;
    }
    const bool defines = tokens.size() >= 2 && tokens[1] == "=" && !register_name(tokens[0]).empty();
    if (!defines) continue;
    bool reads_tainted = is_source;
    for (std::size_t k = 2; k < tokens.size() && !reads_tainted; ++k)
      reads_tainted = tainted.count(register_name(tokens[k])) > 0;
    if (reads_tainted) tainted.insert(register_name(tokens[0]));
  }
  return scan;
}

}  // namespace irvuln
