#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "irvuln/corpus.hpp"
#include "irvuln/detector.hpp"
#include "irvuln/error.hpp"
#include "irvuln/eval.hpp"
#include "irvuln/gradcheck.hpp"
#include "irvuln/hash.hpp"
#include "irvuln/model_io.hpp"
#include "irvuln/synth.hpp"
#include "irvuln/vocab.hpp"

namespace irvuln::cli {

namespace {

struct Paths {
  std::string in, out, data, vocab, model, loss_log;
};

void add_model_flags(CLI::App* cmd, ModelConfig& c) {
  cmd->add_option("--embed-dim", c.embed_dim, "Encoder output width K")->capture_default_str();
  cmd->add_option("--hidden-dim", c.hidden_dim, "LSTM hidden width M per direction")
      ->capture_default_str();
  cmd->add_option("--layers", c.blstm_layers, "Stacked BLSTM layers")->capture_default_str();
  cmd->add_option("--code-hidden", c.code_hidden, "Whole-code classifier hidden width")
      ->capture_default_str();
  cmd->add_option("--line-hidden", c.line_hidden, "Line classifier hidden width")
      ->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "SGD learning rate")->capture_default_str();
  cmd->add_option("--stage1-epochs", c.stage1_epochs, "Whole-code training epochs")
      ->capture_default_str();
  cmd->add_option("--stage2-epochs", c.stage2_epochs, "Line classifier training epochs")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--threshold", c.decision_threshold, "Decision threshold on P(vulnerable)")
      ->capture_default_str();
  cmd->add_option("--clip-norm", c.clip_norm, "Per-step gradient norm cap (0 = off)")
      ->capture_default_str();
  cmd->add_option("--cell-clip", c.cell_clip, "Bound on LSTM cell values (0 = off)")
      ->capture_default_str();
  cmd->add_flag("--no-gate-bias", [&c](std::int64_t) { c.gate_bias = false; },
                "Disable LSTM gate biases");
}

std::unique_ptr<std::ostream> open_out(const std::string& path, std::ostream& fallback,
                                       std::ostream*& target) {
  if (path.empty() || path == "-") {
    target = &fallback;
    return nullptr;
  }
  auto file = std::make_unique<std::ofstream>(path, std::ios::binary);
  if (!*file) throw DataError("cannot write '" + path + "'");
  target = file.get();
  return file;
}

Corpus load_prepared(const std::string& path, std::size_t max_lines, std::ostream& err) {
  PrepareStats stats;
  Corpus corpus = prepare_corpus(load_corpus(path), max_lines, &stats);
  if (stats.lost_vulnerable_lines || stats.dropped_unannotated || stats.dropped_empty ||
      stats.dropped_too_long) {
    err << "warning: " << path << ": " << stats.lost_vulnerable_lines
        << " annotated lines removed by stripping, " << stats.dropped_unannotated
        << " programs lost every annotation, " << stats.dropped_empty << " empty, "
        << stats.dropped_too_long << " at or above " << max_lines << " lines\n";
  }
  return corpus;
}

nlohmann::ordered_json prediction_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.program_id;
  j["code_vulnerable"] = p.code_vulnerable;
  j["code_probability"] = p.code_probability;
  j["line_flags"] = p.line_flags;
  j["line_probabilities"] = p.line_probabilities;
  return j;
}

void write_loss_log(const std::string& path, const Stage1Training& s1, const Stage2Training& s2) {
  std::ofstream log(path, std::ios::binary);
  if (!log) throw DataError("cannot write '" + path + "'");
  log << "stage,epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < s1.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", s1.loss_history[e]);
    log << "1," << e << ',' << buf << '\n';
  }
  for (std::size_t e = 0; e < s2.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", s2.loss_history[e]);
    log << "2," << e << ',' << buf << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical vulnerability detector over LLVM IR slices"};
  app.name(argv.empty() ? "irvuln" : argv.front());
  app.require_subcommand(1, 1);

  Paths paths;
  SynthConfig synth;
  ModelConfig model;
  ExperimentConfig experiment;
  std::size_t max_lines = kDefaultMaxLines;
  std::string vocab_from = "train";
  GradientSuiteOptions grad;
  double grad_threshold = 1e-4;

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic labeled JSONL corpus");
  gen->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  gen->add_option("--programs", synth.program_count, "Number of programs")->capture_default_str();
  gen->add_option("--vulnerable-fraction", synth.vulnerable_fraction,
                  "Fraction of vulnerable programs")
      ->capture_default_str();
  gen->add_option("--min-lines", synth.min_lines, "Shortest program")->capture_default_str();
  gen->add_option("--max-lines", synth.max_lines, "Longest program")->capture_default_str();
  gen->add_option("--token-pool", synth.token_pool_size, "Operand token pool size")
      ->capture_default_str();
  gen->add_option("--motif-span", synth.motif_span, "Lines in the source-to-sink motif")
      ->capture_default_str();
  gen->add_flag("--with-user-functions", synth.with_user_functions,
                "Inject call/define pairs that preprocessing strips");
  gen->add_option("--out", paths.out, "Output JSONL ('-' for stdout)")->required();

  auto* prep = app.add_subcommand("prepare", "Strip user functions and drop long programs");
  prep->add_option("--in", paths.in, "Input JSONL")->required();
  prep->add_option("--out", paths.out, "Output JSONL ('-' for stdout)")->required();
  prep->add_option("--max-lines", max_lines, "Keep programs shorter than this")
      ->capture_default_str();

  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build the token vocabulary");
  vocab_cmd->add_option("--in", paths.in, "Input JSONL")->required();
  vocab_cmd->add_option("--out", paths.out, "Vocabulary file")->required();
  vocab_cmd->add_option("--max-lines", max_lines, "Keep programs shorter than this")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Train both stages and write a model file");
  train->add_option("--data", paths.data, "Training JSONL")->required();
  train->add_option("--vocab", paths.vocab, "Vocabulary file (built from --data when omitted)");
  train->add_option("--out", paths.out, "Model file")->required();
  train->add_option("--loss-log", paths.loss_log, "CSV of per-epoch mean losses");
  train->add_option("--max-lines", max_lines, "Keep programs shorter than this")
      ->capture_default_str();
  add_model_flags(train, model);

  auto* pred = app.add_subcommand("predict", "Write per-program predictions as JSONL");
  pred->add_option("--model", paths.model, "Model file")->required();
  pred->add_option("--data", paths.data, "Input JSONL")->required();
  pred->add_option("--vocab", paths.vocab, "Vocabulary file; must match the model's");
  pred->add_option("--out", paths.out, "Output JSONL ('-' for stdout)")->capture_default_str();
  pred->add_option("--max-lines", max_lines, "Keep programs shorter than this")
      ->capture_default_str();

  auto* evaluate = app.add_subcommand(
      "evaluate", "Score a model, or run the repeated train/test protocol when --model is absent");
  evaluate->add_option("--data", paths.data, "Input JSONL")->required();
  evaluate->add_option("--model", paths.model, "Model file to score on every program of --data");
  evaluate->add_option("--out", paths.out, "CSV report path ('-' for stdout)")
      ->capture_default_str();
  evaluate->add_option("--repeats", experiment.repeats, "Protocol repetitions")
      ->capture_default_str();
  evaluate->add_option("--train-fraction", experiment.train_fraction,
                       "Stratified training share")
      ->capture_default_str();
  evaluate->add_option("--vocab-from", vocab_from, "Vocabulary source")
      ->check(CLI::IsMember({"train", "all"}))
      ->capture_default_str();
  evaluate->add_option("--jobs", experiment.jobs, "Runs trained in parallel")
      ->capture_default_str();
  evaluate->add_option("--max-lines", max_lines, "Keep programs shorter than this")
      ->capture_default_str();
  add_model_flags(evaluate, model);

  auto* gc = app.add_subcommand("grad-check", "Verify analytic gradients by finite differences");
  gc->add_option("--seed", grad.seed, "Seed for random models and programs")
      ->capture_default_str();
  gc->add_option("--programs", grad.programs, "Random programs per stage")->capture_default_str();
  gc->add_option("--coords", grad.coordinates, "Coordinates per check")->capture_default_str();
  gc->add_option("--step", grad.step, "Central difference step")->capture_default_str();
  gc->add_option("--layers", grad.model.blstm_layers, "BLSTM layers")->capture_default_str();
  gc->add_option("--tolerance", grad_threshold, "Maximum relative error")->capture_default_str();

  try {
    std::vector<std::string> rest(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    std::ostream* target = nullptr;
    if (gen->parsed()) {
      const Corpus corpus = generate_corpus(synth);
      auto file = open_out(paths.out, out, target);
      write_corpus(corpus, *target);
    } else if (prep->parsed()) {
      const Corpus corpus = load_prepared(paths.in, max_lines, err);
      auto file = open_out(paths.out, out, target);
      write_corpus(corpus, *target);
    } else if (vocab_cmd->parsed()) {
      const Vocabulary vocab = build_vocabulary(load_prepared(paths.in, max_lines, err));
      save_vocabulary(vocab, paths.out);
      err << "vocabulary: " << vocab.size() << " tokens, digest " << digest_hex(vocab.digest())
          << "\n";
    } else if (train->parsed()) {
      model.validate();
      const Corpus corpus = load_prepared(paths.data, max_lines, err);
      const Vocabulary vocab =
          paths.vocab.empty() ? build_vocabulary(corpus) : load_vocabulary(paths.vocab);
      const auto s1 = train_stage1(corpus, vocab, model);
      const auto s2 = train_stage2(corpus, vocab, s1.model, model);
      save_model(s1.model, s2.model, vocab, model, paths.out);
      if (!paths.loss_log.empty()) write_loss_log(paths.loss_log, s1, s2);
      err << "trained: stage-1 loss " << s1.loss_history.back() << ", stage-2 loss "
          << s2.loss_history.back() << "\n";
    } else if (pred->parsed()) {
      const ModelBundle bundle = load_model(paths.model);
      if (!paths.vocab.empty()) {
        const Vocabulary supplied = load_vocabulary(paths.vocab);
        if (supplied.digest() != bundle.vocab.digest())
          throw DataError("vocabulary '" + paths.vocab + "' (digest " +
                          digest_hex(supplied.digest()) + ") does not match model '" +
                          paths.model + "' (digest " + digest_hex(bundle.vocab.digest()) + ")");
      }
      const Corpus corpus = load_prepared(paths.data, max_lines, err);
      auto file = open_out(paths.out, out, target);
      for (const auto& program : corpus.programs) {
        const auto p = predict(bundle.stage1, bundle.stage2, bundle.vocab, program,
                               bundle.config.decision_threshold);
        *target << prediction_json(p).dump() << '\n';
      }
    } else if (evaluate->parsed()) {
      model.validate();
      const Corpus corpus = load_prepared(paths.data, max_lines, err);
      std::vector<RunResult> runs;
      if (!paths.model.empty()) {
        const ModelBundle bundle = load_model(paths.model);
        RunResult r;
        r.seed = bundle.config.seed;
        r.counts = evaluate_models(bundle.stage1, bundle.stage2, bundle.vocab, corpus,
                                   bundle.config.decision_threshold);
        r.code = metrics(r.counts.code);
        r.line = metrics(r.counts.line);
        runs.push_back(r);
      } else {
        experiment.model = model;
        experiment.vocab_from_all = vocab_from == "all";
        runs = run_experiment(corpus, experiment);
      }
      if (paths.out.empty() || paths.out == "-") {
        write_report_csv(runs, out);
      } else {
        auto file = open_out(paths.out, out, target);
        write_report_csv(runs, *target);
        print_report_table(runs, out);
      }
    } else if (gc->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      const auto report = run_gradient_suite(grad);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "stage1 max relative error %.3e\nstage2 max relative error %.3e\n"
                    "coordinates %zu, resampled %zu, %.2f s\n",
                    report.stage1_max_error, report.stage2_max_error, report.coordinates_checked,
                    report.resampled, seconds);
      out << buf;
      if (!(report.max_error() < grad_threshold)) {
        err << "gradient check FAILED: max relative error " << report.max_error()
            << " >= " << grad_threshold << "\n";
        return kNumericFailure;
      }
      out << "gradient check passed\n";
    }
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace irvuln::cli
