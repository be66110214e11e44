#include "ched/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ched/corpus.hpp"
#include "ched/lexicon.hpp"
#include "ched/metrics.hpp"
#include "ched/model.hpp"
#include "ched/pipeline.hpp"

namespace fs = std::filesystem;

namespace ched::cli {

namespace {

std::ifstream open_or_die(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream create_or_die(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

corpus::Vocabulary load_vocab(const std::string& path) {
  auto in = open_or_die(path);
  return corpus::Vocabulary::load(in);
}

lex::FunctionLexicon load_lexicon(const std::string& path,
                                  const corpus::Vocabulary* vocab) {
  auto in = open_or_die(path);
  auto lexicon = lex::FunctionLexicon::load(in, vocab);
  if (lexicon.size() == 0) {
    std::cerr << "warning: function lexicon " << path << " is empty\n";
  }
  return lexicon;
}

std::vector<corpus::Sentence> read_sentence_file(const std::string& path) {
  auto in = open_or_die(path);
  std::vector<corpus::Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    corpus::Sentence s;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) s.push_back(tok);
    out.push_back(std::move(s));
  }
  return out;
}

void write_sentence(std::ostream& out, const corpus::Sentence& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out << ' ';
    out << s[i];
  }
  out << '\n';
}

// ---- preprocess ----------------------------------------------------------

struct PreprocessArgs {
  std::string format;
  std::string input;
  std::string acts;
  std::string lines;
  std::string convs;
  std::string out_dir;
  std::uint64_t seed = 0;
  int max_len = corpus::kMaxSentenceLen;
};

int cmd_preprocess(const PreprocessArgs& a) {
  std::vector<corpus::Dialog> dialogs;
  std::size_t skipped = 0;
  if (a.format == "dailydialog") {
    auto in = open_or_die(a.input);
    std::vector<std::vector<int>> acts;
    if (!a.acts.empty()) {
      auto acts_in = open_or_die(a.acts);
      std::string line;
      while (std::getline(acts_in, line)) {
        acts.push_back(corpus::parse_dailydialog_acts(line));
      }
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      auto d = corpus::parse_dailydialog(line);
      if (!d) {
        ++skipped;
        std::cerr << "warning: line " << lineno + 1
                  << ": no non-empty turns, skipped\n";
      } else {
        if (lineno < acts.size() &&
            acts[lineno].size() == d->raw_turns.size()) {
          d->turn_acts = acts[lineno];
        }
        dialogs.push_back(std::move(*d));
      }
      ++lineno;
    }
  } else if (a.format == "cornell") {
    auto lines_in = open_or_die(a.lines);
    auto convs_in = open_or_die(a.convs);
    corpus::CornellStats stats;
    dialogs = corpus::parse_cornell_movie(lines_in, convs_in, &stats);
    if (stats.malformed_lines || stats.missing_line_ids ||
        stats.empty_conversations) {
      std::cerr << "warning: cornell parse: " << stats.malformed_lines
                << " malformed records, " << stats.missing_line_ids
                << " unresolvable line ids, " << stats.empty_conversations
                << " empty conversations dropped\n";
    }
  } else {
    throw std::runtime_error("unknown --format " + a.format +
                             " (expected dailydialog or cornell)");
  }

  for (auto& d : dialogs) corpus::preprocess_dialog(d, a.max_len);
  std::erase_if(dialogs,
                [](const corpus::Dialog& d) { return d.sentences.empty(); });

  auto split = corpus::split_dialogs(std::move(dialogs), a.seed);
  fs::create_directories(a.out_dir);
  const bool with_acts = !a.acts.empty();
  auto dump = [&](const char* name, const std::vector<corpus::Dialog>& ds) {
    auto out = create_or_die((fs::path(a.out_dir) / name).string() + ".txt");
    corpus::write_canonical(out, ds);
    if (with_acts) {
      auto acts_out =
          create_or_die((fs::path(a.out_dir) / name).string() + ".acts.txt");
      corpus::write_acts(acts_out, ds);
    }
  };
  dump("train", split.train);
  dump("dev", split.dev);
  dump("test", split.test);

  auto manifest = create_or_die(
      (fs::path(a.out_dir) / "split_manifest.txt").string());
  const char* names[3] = {"train", "dev", "test"};
  for (std::size_t i = 0; i < split.assignment.size(); ++i) {
    manifest << i << '\t' << names[split.assignment[i]] << '\n';
  }
  std::cout << "preprocess: " << split.train.size() << " train, "
            << split.dev.size() << " dev, " << split.test.size()
            << " test dialogs";
  if (skipped) std::cout << " (" << skipped << " skipped)";
  std::cout << '\n';
  return 0;
}

// ---- build-vocab -----------------------------------------------------------

int cmd_build_vocab(const std::string& input, int cap,
                    const std::string& out_path) {
  auto in = open_or_die(input);
  auto dialogs = corpus::read_canonical(in);
  auto vocab = corpus::build_vocab(dialogs, cap);
  auto out = create_or_die(out_path);
  vocab.save(out);
  std::cout << "build-vocab: " << vocab.size() << " entries\n";
  return 0;
}

// ---- extract ---------------------------------------------------------------

int cmd_extract(const std::string& input, const std::string& lexicon_path,
                const std::string& vocab_path, const std::string& mode_name,
                const std::string& out_path) {
  lex::ExtractionMode mode;
  if (mode_name == "train") {
    mode = lex::ExtractionMode::kTraining;
  } else if (mode_name == "eval") {
    mode = lex::ExtractionMode::kEvaluation;
  } else {
    throw std::runtime_error("--mode must be train or eval");
  }
  std::optional<corpus::Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = load_vocab(vocab_path);
  auto lexicon = load_lexicon(lexicon_path, vocab ? &*vocab : nullptr);
  auto sentences = read_sentence_file(input);
  auto out = create_or_die(out_path);
  for (const auto& s : sentences) {
    auto c = lex::extract_content_sequence(s, lexicon, mode);
    write_sentence(out, c.lemmas);
  }
  std::cout << "extract: " << sentences.size() << " lines\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string train_file;
  std::string acts_file;
  std::string vocab_path;
  std::string lexicon_path;
  std::string embeddings;
  std::string out_dir;
  std::string arch = "hed-ced";
  std::uint64_t seed = 0;
  int epochs = 20;
  int batch = 32;
  int window = 5;
  double lr = 3e-4;
  bool da_head = false;
  double da_weight = 0.1;
  int emb_size = 200;
  int enc_hidden = 300;
  int dec_hidden = 200;
  int attn_size = 0;
  int max_len = 40;
  int max_content_len = 20;
  bool no_noise = false;
};

int cmd_train(const TrainArgs& a) {
  auto vocab = load_vocab(a.vocab_path);
  auto lexicon = load_lexicon(a.lexicon_path, &vocab);

  auto in = open_or_die(a.train_file);
  auto dialogs = corpus::read_canonical(in);
  if (!a.acts_file.empty()) {
    auto acts_in = open_or_die(a.acts_file);
    corpus::read_acts(acts_in, dialogs);
  } else if (a.da_head) {
    throw std::runtime_error("--da-head requires --acts labels");
  }

  std::vector<corpus::ContextWindow> windows;
  for (const auto& d : dialogs) {
    auto ws = corpus::to_context_windows(d, a.window);
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  if (windows.empty()) throw std::runtime_error("train: no context windows");
  auto triplets = pipeline::build_training_triplets(windows, lexicon, vocab);

  models::ModelConfig cfg;
  auto arch = models::arch_from_name(a.arch);
  if (!arch) throw std::runtime_error("unknown --arch " + a.arch);
  cfg.arch = *arch;
  cfg.vocab_size = vocab.size();
  cfg.emb_size = a.emb_size;
  cfg.enc_hidden = a.enc_hidden;
  cfg.dec_hidden = a.dec_hidden;
  cfg.attn_size = a.attn_size;
  cfg.window = a.window;
  cfg.max_sent_len = a.max_len;
  cfg.max_content_len = a.max_content_len;
  cfg.da_head = a.da_head;
  cfg.da_weight = a.da_weight;

  Rng rng(a.seed);
  std::optional<metrics::EmbeddingTable> table;
  if (!a.embeddings.empty()) {
    auto emb_in = open_or_die(a.embeddings);
    std::size_t emb_skipped = 0;
    table = metrics::EmbeddingTable::load(emb_in, &vocab, &emb_skipped);
    if (emb_skipped) {
      std::cerr << "warning: skipped " << emb_skipped
                << " malformed embedding lines\n";
    }
  }
  models::Model<float> model(cfg, rng, table ? &*table : nullptr, &vocab);

  auto pool_tokens =
      lex::build_insert_pool(vocab, lexicon, lex::ExtractionMode::kTraining);
  std::vector<int> pool_ids;
  pool_ids.reserve(pool_tokens.size());
  for (const auto& t : pool_tokens) pool_ids.push_back(vocab.encode(t));

  pipeline::TrainOptions opt;
  opt.batch_size = a.batch;
  opt.lr = a.lr;
  opt.noise = !a.no_noise;

  fs::create_directories(a.out_dir);
  auto loss_log = create_or_die((fs::path(a.out_dir) / "loss.log").string());
  for (int epoch = 1; epoch <= a.epochs; ++epoch) {
    auto report = pipeline::train_epoch(triplets, model, opt, pool_ids, rng);
    loss_log << epoch << '\t' << std::fixed << std::setprecision(6)
             << report.content_loss << '\t' << report.sentence_loss << '\t'
             << report.loss << '\n';
    loss_log.flush();
    std::cout << "epoch " << epoch << ": loss " << std::fixed
              << std::setprecision(4) << report.loss << " (content "
              << report.content_loss << ", sentence " << report.sentence_loss
              << ")\n";
    std::map<std::string, std::string> extra;
    extra["train_loss"] = std::to_string(report.loss);
    std::ostringstream dirname;
    dirname << "epoch_" << std::setw(3) << std::setfill('0') << epoch;
    pipeline::save_checkpoint(model, vocab, epoch, extra,
                              fs::path(a.out_dir) / dirname.str());
  }
  pipeline::save_checkpoint(model, vocab, a.epochs, {},
                            fs::path(a.out_dir) / "final");
  return 0;
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string vocab_path;
  std::string input;
  std::string out_path;
  std::string content_out;
  std::string refs_out;
  int beam = 1;
};

int cmd_generate(const GenerateArgs& a) {
  auto vocab = load_vocab(a.vocab_path);
  auto model = pipeline::load_checkpoint(a.checkpoint, vocab);

  auto in = open_or_die(a.input);
  auto dialogs = corpus::read_canonical(in);

  auto out = create_or_die(a.out_path);
  std::optional<std::ofstream> content_out, refs_out;
  if (!a.content_out.empty()) content_out = create_or_die(a.content_out);
  if (!a.refs_out.empty()) refs_out = create_or_die(a.refs_out);

  pipeline::GenerateOptions opt;
  opt.beam = a.beam;
  std::size_t count = 0;
  for (const auto& d : dialogs) {
    for (const auto& w : corpus::to_context_windows(d, model->config().window)) {
      std::vector<std::vector<int>> ctx;
      for (const auto& s : w.context) ctx.push_back(vocab.encode_sentence(s));
      auto gen = pipeline::generate(*model, ctx, opt);
      write_sentence(out, vocab.decode_ids(gen.response_ids));
      if (content_out) {
        write_sentence(*content_out, vocab.decode_ids(gen.content_ids));
      }
      if (refs_out) write_sentence(*refs_out, w.response);
      ++count;
    }
  }
  std::cout << "generate: " << count << " hypotheses\n";
  return 0;
}

// ---- evaluate --------------------------------------------------------------

int cmd_evaluate(const std::string& refs_path, const std::string& hyps_path,
                 const std::string& lexicon_path, const std::string& vocab_path,
                 const std::string& embeddings, const std::string& out_path) {
  std::optional<corpus::Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = load_vocab(vocab_path);
  auto lexicon = load_lexicon(lexicon_path, vocab ? &*vocab : nullptr);
  auto refs = read_sentence_file(refs_path);
  auto hyps = read_sentence_file(hyps_path);
  if (refs.size() != hyps.size()) {
    throw std::runtime_error("evaluate: line counts differ (" +
                             std::to_string(refs.size()) + " refs, " +
                             std::to_string(hyps.size()) + " hyps)");
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].empty()) {
      throw std::runtime_error("evaluate: empty reference at line " +
                               std::to_string(i + 1));
    }
  }
  std::optional<metrics::EmbeddingTable> table;
  if (!embeddings.empty()) {
    auto emb_in = open_or_die(embeddings);
    std::size_t emb_skipped = 0;
    table = metrics::EmbeddingTable::load(emb_in, nullptr, &emb_skipped);
    if (emb_skipped) {
      std::cerr << "warning: skipped " << emb_skipped
                << " malformed embedding lines\n";
    }
  } else {
    std::cerr << "warning: no --embeddings given; "
              << "embedding metrics report 0\n";
  }
  auto report =
      metrics::evaluate_corpus(refs, hyps, lexicon, table ? &*table : nullptr);
  report.write(std::cout);
  if (!out_path.empty()) {
    auto out = create_or_die(out_path);
    report.write(out);
  }
  return 0;
}

// ---- chat ------------------------------------------------------------------

int cmd_chat(const std::string& checkpoint, const std::string& vocab_path,
             int beam, std::istream& in, std::ostream& out) {
  auto vocab = load_vocab(vocab_path);
  auto model = pipeline::load_checkpoint(checkpoint, vocab);
  const int window = model->config().window;
  const bool content_arch = models::has_content_path(model->config().arch);

  pipeline::GenerateOptions opt;
  opt.beam = beam;
  std::vector<corpus::Sentence> context;
  auto push_sentence = [&](corpus::Sentence s) {
    context.push_back(std::move(s));
    while (static_cast<int>(context.size()) > window) {
      context.erase(context.begin());
    }
  };

  out << "(chat: type a turn, empty line to quit)\n";
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    bool any = false;
    for (const auto& chunk : corpus::segment(line)) {
      auto toks = corpus::tokenize(chunk);
      if (toks.empty()) continue;
      if (static_cast<int>(toks.size()) > model->config().max_sent_len) {
        toks.resize(static_cast<std::size_t>(model->config().max_sent_len));
      }
      push_sentence(std::move(toks));
      any = true;
    }
    if (!any) break;

    std::vector<std::vector<int>> ctx;
    for (const auto& s : context) ctx.push_back(vocab.encode_sentence(s));
    auto gen = pipeline::generate(*model, ctx, opt);
    auto response = vocab.decode_ids(gen.response_ids);
    if (content_arch) {
      out << "c: ";
      write_sentence(out, vocab.decode_ids(gen.content_ids));
    }
    out << "y: ";
    write_sentence(out, response);
    if (gen.da_label > 0) {
      out << "da: " << models::dialog_act_name(gen.da_label) << '\n';
    }
    if (!response.empty()) push_sentence(std::move(response));
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"content-word based dialog response generation toolkit"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* sub_pre = app.add_subcommand(
      "preprocess", "normalize a raw corpus into the canonical format");
  sub_pre->add_option("--format", pre.format, "dailydialog or cornell")
      ->required();
  sub_pre->add_option("--input", pre.input, "raw dialog text file");
  sub_pre->add_option("--acts", pre.acts, "dialog act labels (dailydialog)");
  sub_pre->add_option("--lines", pre.lines, "movie_lines file (cornell)");
  sub_pre->add_option("--convs", pre.convs,
                      "movie_conversations file (cornell)");
  sub_pre->add_option("--out", pre.out_dir, "output directory")->required();
  sub_pre->add_option("--seed", pre.seed, "split shuffle seed");
  sub_pre->add_option("--max-len", pre.max_len, "sentence truncation length");

  std::string bv_input, bv_out;
  int bv_cap = 10000;
  auto* sub_bv = app.add_subcommand("build-vocab",
                                    "frequency vocabulary from a corpus");
  sub_bv->add_option("--input", bv_input, "canonical corpus file")->required();
  sub_bv->add_option("--cap", bv_cap, "maximum non-special entries");
  sub_bv->add_option("--out", bv_out, "vocabulary file")->required();

  std::string ex_input, ex_lexicon, ex_vocab, ex_mode = "eval", ex_out;
  auto* sub_ex = app.add_subcommand(
      "extract", "content word sequences from tokenized sentences");
  sub_ex->add_option("--input", ex_input, "one tokenized sentence per line")
      ->required();
  sub_ex->add_option("--lexicon", ex_lexicon, "function word lexicon")
      ->required();
  sub_ex->add_option("--vocab", ex_vocab, "adapt lexicon to this vocabulary");
  sub_ex->add_option("--mode", ex_mode, "train or eval");
  sub_ex->add_option("--out", ex_out, "output file")->required();

  TrainArgs tr;
  auto* sub_tr = app.add_subcommand("train", "train a model");
  sub_tr->add_option("--train", tr.train_file, "canonical training corpus")
      ->required();
  sub_tr->add_option("--acts", tr.acts_file, "aligned act labels");
  sub_tr->add_option("--vocab", tr.vocab_path, "vocabulary file")->required();
  sub_tr->add_option("--lexicon", tr.lexicon_path, "function word lexicon")
      ->required();
  sub_tr->add_option("--embeddings", tr.embeddings,
                     "pretrained word embeddings");
  sub_tr->add_option("--arch", tr.arch,
                     "hed-plain | hed-attn | hed-cd | hed-ced");
  sub_tr->add_option("--seed", tr.seed, "random seed")->required();
  sub_tr->add_option("--epochs", tr.epochs, "training epochs");
  sub_tr->add_option("--batch", tr.batch, "batch size");
  sub_tr->add_option("--window", tr.window, "context window size");
  sub_tr->add_option("--lr", tr.lr, "Adam learning rate");
  sub_tr->add_flag("--da-head", tr.da_head, "train the DA prediction head");
  sub_tr->add_option("--da-weight", tr.da_weight, "DA loss weight");
  sub_tr->add_option("--emb-size", tr.emb_size, "embedding size");
  sub_tr->add_option("--enc-hidden", tr.enc_hidden,
                     "encoder hidden size per direction");
  sub_tr->add_option("--dec-hidden", tr.dec_hidden, "decoder hidden size");
  sub_tr->add_option("--attn-size", tr.attn_size, "attention hidden size");
  sub_tr->add_option("--max-len", tr.max_len, "maximum sentence length");
  sub_tr->add_option("--max-content-len", tr.max_content_len,
                     "maximum content sequence length");
  sub_tr->add_flag("--no-noise", tr.no_noise,
                   "disable content noise injection");
  sub_tr->add_option("--out", tr.out_dir, "checkpoint directory")->required();

  GenerateArgs gen;
  auto* sub_gen = app.add_subcommand(
      "generate", "decode responses for every context window of a corpus");
  sub_gen->add_option("--checkpoint", gen.checkpoint, "checkpoint directory")
      ->required();
  sub_gen->add_option("--vocab", gen.vocab_path, "vocabulary file")
      ->required();
  sub_gen->add_option("--input", gen.input, "canonical corpus file")
      ->required();
  sub_gen->add_option("--out", gen.out_path, "hypothesis file")->required();
  sub_gen->add_option("--content-out", gen.content_out,
                      "predicted content sequences");
  sub_gen->add_option("--refs-out", gen.refs_out,
                      "aligned reference responses");
  sub_gen->add_option("--beam", gen.beam, "beam width (1 = greedy)");

  std::string ev_refs, ev_hyps, ev_lexicon, ev_vocab, ev_emb, ev_out;
  auto* sub_ev = app.add_subcommand("evaluate", "score hypotheses");
  sub_ev->add_option("--refs", ev_refs, "reference sentences")->required();
  sub_ev->add_option("--hyps", ev_hyps, "hypothesis sentences")->required();
  sub_ev->add_option("--lexicon", ev_lexicon, "function word lexicon")
      ->required();
  sub_ev->add_option("--vocab", ev_vocab, "adapt lexicon to this vocabulary");
  sub_ev->add_option("--embeddings", ev_emb, "pretrained word embeddings");
  sub_ev->add_option("--out", ev_out, "report file");

  std::string ch_checkpoint, ch_vocab;
  int ch_beam = 1;
  auto* sub_ch = app.add_subcommand("chat", "interactive response loop");
  sub_ch->add_option("--checkpoint", ch_checkpoint, "checkpoint directory")
      ->required();
  sub_ch->add_option("--vocab", ch_vocab, "vocabulary file")->required();
  sub_ch->add_option("--beam", ch_beam, "beam width (1 = greedy)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sub_pre->parsed()) return cmd_preprocess(pre);
    if (sub_bv->parsed()) return cmd_build_vocab(bv_input, bv_cap, bv_out);
    if (sub_ex->parsed()) {
      return cmd_extract(ex_input, ex_lexicon, ex_vocab, ex_mode, ex_out);
    }
    if (sub_tr->parsed()) return cmd_train(tr);
    if (sub_gen->parsed()) return cmd_generate(gen);
    if (sub_ev->parsed()) {
      return cmd_evaluate(ev_refs, ev_hyps, ev_lexicon, ev_vocab, ev_emb,
                          ev_out);
    }
    if (sub_ch->parsed()) {
      return cmd_chat(ch_checkpoint, ch_vocab, ch_beam, std::cin, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace ched::cli
