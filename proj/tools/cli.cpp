#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "cats/checkpoint.hpp"
#include "cats/corpus.hpp"
#include "cats/embeddings.hpp"
#include "cats/evaluation.hpp"
#include "cats/log.hpp"
#include "cats/synthetic.hpp"
#include "cats/trainer.hpp"

namespace cats {
namespace {

// Runtime failures that are really usage errors (missing mode-dependent flags).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using RunConfig = std::vector<std::pair<std::string, std::string>>;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string flag(bool b) { return b ? "true" : "false"; }

std::size_t thread_cap() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CATS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = std::min(n, static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      log_warning(std::string("ignoring malformed CATS_THREADS='") + env + "'");
    }
  }
  return n;
}

void echo(std::ostream& err, const std::string& command, const RunConfig& cfg) {
  err << "[config] command=" << command << '\n';
  for (const auto& [k, v] : cfg) err << "[config] " << k << '=' << v << '\n';
}

std::vector<std::string> comment_lines(const std::string& command, const RunConfig& cfg) {
  std::vector<std::string> out{"cats.command = " + command};
  for (const auto& [k, v] : cfg) out.push_back("cats." + k + " = " + v);
  return out;
}

// key=value lines become --key=value arguments placed before the command
// line's own flags, so later flags win and unknown keys fail parsing.
std::vector<std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a path");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;
  auto extra = read_config_file(*path);
  const auto at = args.empty() ? args.end() : args.begin() + 1;
  args.insert(at, extra.begin(), extra.end());
  return args;
}

struct TrainArgs {
  std::string train, dev, embeddings = "rnn", vectors, ctx_vectors, dev_ctx_vectors, save, report;
  bool joint = false, sentence_vector = false, no_char_encoder = false;
  double lambda = 0.2, lr = 1e-3, dropout = 0.0, clip = 5.0;
  std::size_t batch_size = 128, seed = 1, d_char = 100, d_enc = 256, d_dec = 256, d_att = 128, ctx_dim = 64,
              rnn_hidden = 100, static_dim = 64, patience = 0;
  long epochs = -1;
};

struct PredictArgs {
  std::string model, input, output, ctx_vectors;
  std::size_t beam = 0;
};

struct EvalArgs {
  std::string pred, gold, task = "seg";
};

struct AnalyzeArgs {
  std::string pred, gold;
  std::size_t sample = 100, seed = 1;
};

struct SynthArgs {
  std::string out, manifest, prefix = "syn";
  std::size_t n = 100, seed = 1, lexicon_seed = 2021, n_stems = 24;
};

VectorStore merged_store(const std::vector<std::string>& paths) {
  std::optional<VectorStore> store;
  for (const auto& p : paths) {
    if (p.empty()) continue;
    VectorStore s = load_vector_store(p);
    if (!store) {
      store = std::move(s);
      continue;
    }
    if (s.dim() != store->dim()) {
      throw EmbeddingError("vector files disagree on width: " + std::to_string(store->dim()) + " vs " +
                           std::to_string(s.dim()));
    }
    for (const auto& r : s.records()) store->put(r.sent_id, r.token_index, r.values);
  }
  return *store;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const ContextMode mode = parse_context_mode(a.embeddings);
  if (mode == ContextMode::static_table && a.vectors.empty()) throw UsageError("--embeddings static requires --vectors");
  if (mode == ContextMode::external && a.ctx_vectors.empty()) {
    throw UsageError("--embeddings external requires --ctx-vectors");
  }
  if (a.joint && !(a.lambda > 0.0 && a.lambda < 1.0)) throw UsageError("--lambda must lie in (0,1)");

  Corpus train_corpus = read_conllu_file(a.train, Split::train);
  Corpus dev_corpus = read_conllu_file(a.dev, Split::dev);
  auto [chars, labels] = build_vocabs(train_corpus);
  const std::size_t epochs = a.epochs < 0 ? default_epochs(train_corpus.sentences.size())
                                          : static_cast<std::size_t>(a.epochs);
  const std::size_t threads = thread_cap();

  ContextProvider<float> provider = [&] {
    switch (mode) {
      case ContextMode::zeros: return ContextProvider<float>::zeros(a.ctx_dim);
      case ContextMode::static_table: return ContextProvider<float>::static_vectors(load_static_table(a.vectors));
      case ContextMode::rnn: {
        StaticTable table = a.vectors.empty() ? random_static_table(train_corpus, a.static_dim, a.seed + 1)
                                              : load_static_table(a.vectors);
        return ContextProvider<float>::rnn(std::move(table), a.rnn_hidden, a.seed + 2);
      }
      case ContextMode::external: return ContextProvider<float>::external(merged_store({a.ctx_vectors, a.dev_ctx_vectors}));
    }
    throw std::logic_error("unhandled context mode");
  }();

  ModelConfig mc;
  mc.d_char = a.d_char;
  mc.d_enc = a.d_enc;
  mc.d_dec = a.d_dec;
  mc.d_att = a.d_att;
  mc.d_ctx = provider.dim();
  mc.joint = a.joint;
  mc.use_sentence_vector = a.sentence_vector;
  mc.d_sent = a.sentence_vector ? provider.sentence_dim() : 0;
  mc.char_encoder_enabled = !a.no_char_encoder;
  mc.dropout = a.dropout;
  CatsModel<float> model(mc, std::move(chars), std::move(labels), a.seed);

  RunConfig cfg{{"train", a.train},
                {"dev", a.dev},
                {"embeddings", to_string(mode)},
                {"vectors", a.vectors},
                {"ctx-vectors", a.ctx_vectors},
                {"dev-ctx-vectors", a.dev_ctx_vectors},
                {"joint", flag(a.joint)},
                {"lambda", num(a.lambda)},
                {"sentence-vector", flag(a.sentence_vector)},
                {"lr", num(a.lr)},
                {"batch-size", std::to_string(a.batch_size)},
                {"epochs", std::to_string(epochs)},
                {"seed", std::to_string(a.seed)},
                {"patience", std::to_string(a.patience)},
                {"clip", num(a.clip)},
                {"dropout", num(a.dropout)},
                {"d-char", std::to_string(a.d_char)},
                {"d-enc", std::to_string(a.d_enc)},
                {"d-dec", std::to_string(a.d_dec)},
                {"d-att", std::to_string(a.d_att)},
                {"ctx-dim", std::to_string(provider.dim())},
                {"rnn-hidden", std::to_string(a.rnn_hidden)},
                {"static-dim", std::to_string(a.static_dim)},
                {"no-char-encoder", flag(a.no_char_encoder)},
                {"save", a.save},
                {"report", a.report}};
  echo(err, "train", cfg);

  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch_size;
  tc.epochs = epochs;
  tc.lambda = a.lambda;
  tc.seed = a.seed;
  tc.clip_norm = a.clip;
  tc.threads = threads;
  if (a.patience > 0) tc.patience = a.patience;
  TrainReport report = train(model, provider, train_corpus, dev_corpus, tc);

  Metadata meta(cfg.begin(), cfg.end());
  if (!a.save.empty()) save_checkpoint(a.save, model, provider, meta);
  write_train_report(out, report, meta);
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    if (!f) throw std::runtime_error("cannot write report " + a.report);
    write_train_report(f, report, meta);
  }
  return 0;
}

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  Checkpoint ck = load_checkpoint(a.model);
  if (ck.provider.mode() == ContextMode::external) {
    if (a.ctx_vectors.empty()) throw UsageError("this model uses external vectors; pass --ctx-vectors");
    ck.provider.set_store(load_vector_store(a.ctx_vectors));
  } else if (!a.ctx_vectors.empty()) {
    log_warning("--ctx-vectors ignored: the model's context mode is " + to_string(ck.provider.mode()));
  }
  const std::size_t threads = thread_cap();
  RunConfig cfg{{"model", a.model},
                {"model-digest", file_digest(a.model)},
                {"input", a.input},
                {"output", a.output},
                {"ctx-vectors", a.ctx_vectors},
                {"beam", std::to_string(a.beam)}};
  echo(err, "predict", cfg);

  Corpus input = strip_analyses(read_conllu_file(a.input, Split::test));
  std::ofstream file;
  std::ostream* dst = &out;
  if (!a.output.empty()) {
    file.open(a.output);
    if (!file) throw std::runtime_error("cannot write " + a.output);
    dst = &file;
  }
  if (input.sentences.empty()) return 0;

  Prediction p = predict_corpus(ck.model, ck.provider, input, a.beam, threads);
  auto header = comment_lines("predict", cfg);
  if (!p.truncated.empty()) {
    std::string t = "cats.truncated =";
    for (const auto& e : p.truncated) {
      t += ' ' + input.sentences[e.sentence].sent_id + ':' + std::to_string(e.token);
    }
    header.push_back(t);
    log_warning(std::to_string(p.truncated.size()) + " token(s) hit the decode length cap");
  }
  write_conllu(*dst, p.corpus, header);
  return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Task task = parse_task(a.task);
  echo(err, "eval", {{"pred", a.pred}, {"gold", a.gold}, {"task", a.task}});
  Corpus pred = read_conllu_file(a.pred, Split::test);
  Corpus gold = read_conllu_file(a.gold, Split::test);
  out << format_report(evaluate(task, pred, gold));
  return 0;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  echo(err, "analyze",
       {{"pred", a.pred}, {"gold", a.gold}, {"sample", std::to_string(a.sample)}, {"seed", std::to_string(a.seed)}});
  Corpus pred = read_conllu_file(a.pred, Split::test);
  Corpus gold = read_conllu_file(a.gold, Split::test);
  out << format_breakdown(analyze_errors(pred, gold, a.sample, a.seed));
  return 0;
}

int cmd_synth(const SynthArgs& a, std::ostream&, std::ostream& err) {
  const std::string manifest = a.manifest.empty() ? a.out + ".manifest.tsv" : a.manifest;
  RunConfig cfg{{"out", a.out},
                {"manifest", manifest},
                {"n", std::to_string(a.n)},
                {"seed", std::to_string(a.seed)},
                {"lexicon-seed", std::to_string(a.lexicon_seed)},
                {"n-stems", std::to_string(a.n_stems)},
                {"prefix", a.prefix}};
  echo(err, "synth", cfg);
  if (a.n == 0) throw UsageError("--n must be at least 1");
  SynthConfig sc;
  sc.n_sentences = a.n;
  sc.seed = a.seed;
  sc.lexicon_seed = a.lexicon_seed;
  sc.n_stems = a.n_stems;
  sc.id_prefix = a.prefix;
  SyntheticCorpus sy = generate_synthetic(sc);

  std::ofstream c(a.out);
  if (!c) throw std::runtime_error("cannot write " + a.out);
  write_conllu(c, sy.corpus, comment_lines("synth", cfg));
  std::ofstream m(manifest);
  if (!m) throw std::runtime_error("cannot write " + manifest);
  write_manifest(m, sy.manifest);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CATS: contextualized token-to-word segmentation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all", "Show help for every command");
  app.add_option("--config", "key=value file; flags given on the command line take precedence");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model and write the best checkpoint");
  tr->add_option("--train", ta.train, "Training CoNLL-U")->required();
  tr->add_option("--dev", ta.dev, "Development CoNLL-U")->required();
  tr->add_option("--embeddings", ta.embeddings, "zeros|static|rnn|external")
      ->check(CLI::IsMember({"zeros", "static", "rnn", "external"}))
      ->capture_default_str();
  tr->add_option("--vectors", ta.vectors, "Static table (static mode; optional for rnn)");
  tr->add_option("--ctx-vectors", ta.ctx_vectors, "CTXV1 file (external mode)");
  tr->add_option("--dev-ctx-vectors", ta.dev_ctx_vectors, "Extra CTXV1 file for the dev split");
  tr->add_flag("--joint", ta.joint, "Emit segment labels as well");
  tr->add_option("--lambda", ta.lambda, "Segmentation loss weight")->capture_default_str();
  tr->add_flag("--sentence-vector", ta.sentence_vector, "Feed the sentence vector to the label head");
  tr->add_option("--lr", ta.lr)->capture_default_str();
  tr->add_option("--batch-size", ta.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--epochs", ta.epochs, "Default: 40 below 5,000 training sentences, else 20");
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--patience", ta.patience, "Stop after this many epochs without dev gain (0: off)");
  tr->add_option("--clip", ta.clip, "Global gradient norm cap")->capture_default_str();
  tr->add_option("--dropout", ta.dropout)->capture_default_str();
  tr->add_option("--d-char", ta.d_char)->capture_default_str();
  tr->add_option("--d-enc", ta.d_enc)->capture_default_str();
  tr->add_option("--d-dec", ta.d_dec)->capture_default_str();
  tr->add_option("--d-att", ta.d_att)->capture_default_str();
  tr->add_option("--ctx-dim", ta.ctx_dim, "Width of the zeros context")->capture_default_str();
  tr->add_option("--rnn-hidden", ta.rnn_hidden)->capture_default_str();
  tr->add_option("--static-dim", ta.static_dim, "Width of the random table used by rnn without --vectors")
      ->capture_default_str();
  tr->add_flag("--no-char-encoder", ta.no_char_encoder, "Replace the char BiLSTM by a context projection");
  tr->add_option("--save", ta.save, "Checkpoint path");
  tr->add_option("--report", ta.report, "Also write the training report here");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Segment (and label) raw tokens");
  pr->add_option("--model", pa.model)->required();
  pr->add_option("--input", pa.input)->required();
  pr->add_option("--output", pa.output, "Default: stdout");
  pr->add_option("--beam", pa.beam, "Beam width (0: greedy)")->capture_default_str();
  pr->add_option("--ctx-vectors", pa.ctx_vectors, "CTXV1 file for external-mode models");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predictions against gold");
  ev->add_option("--pred", ea.pred)->required();
  ev->add_option("--gold", ea.gold)->required();
  ev->add_option("--task", ea.task)->check(CLI::IsMember({"seg", "pos", "dep", "ner"}))->capture_default_str();

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Segmentation error breakdown");
  an->add_option("--pred", aa.pred)->required();
  an->add_option("--gold", aa.gold)->required();
  an->add_option("--sample", aa.sample, "Sentences sampled")->capture_default_str();
  an->add_option("--seed", aa.seed)->capture_default_str();

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Generate the synthetic ambiguity corpus");
  sy->add_option("--out", sa.out)->required();
  sy->add_option("--n", sa.n, "Sentences")->capture_default_str();
  sy->add_option("--seed", sa.seed)->capture_default_str();
  sy->add_option("--manifest", sa.manifest, "Default: <out>.manifest.tsv");
  sy->add_option("--lexicon-seed", sa.lexicon_seed)->capture_default_str();
  sy->add_option("--n-stems", sa.n_stems)->capture_default_str();
  sy->add_option("--prefix", sa.prefix, "sent_id prefix")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*tr) return cmd_train(ta, out, err);
    if (*pr) return cmd_predict(pa, out, err);
    if (*ev) return cmd_eval(ea, out, err);
    if (*an) return cmd_analyze(aa, out, err);
    if (*sy) return cmd_synth(sa, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << app.get_subcommands().front()->help();
    return 2;
  } catch (const TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cats
