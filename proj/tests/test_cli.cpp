#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ched/cli.hpp"

namespace fs = std::filesystem;

namespace {

const char* kLexiconPath = CHED_DATA_DIR "/function_words.txt";

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) { return ched::cli::run(args); }

// A tiny DailyDialog-format corpus with enough repetition to train on.
std::string toy_dailydialog() {
  std::string text;
  const char* topics[] = {"tea", "coffee", "rain", "music"};
  for (int i = 0; i < 12; ++i) {
    const char* t = topics[i % 4];
    text += std::string("do you like ") + t + " ? __eou__ i like " + t +
            " . __eou__ good . __eou__\n";
  }
  return text;
}

struct Workspace {
  fs::path dir;
  fs::path corpus;
  fs::path out;
  fs::path vocab;
};

Workspace prepared_workspace(const std::string& name) {
  Workspace w;
  w.dir = fresh_dir(name);
  w.corpus = w.dir / "raw.txt";
  write_file(w.corpus, toy_dailydialog());
  w.out = w.dir / "prep";
  REQUIRE(run({"preprocess", "--format", "dailydialog", "--input",
               w.corpus.string(), "--out", w.out.string(), "--seed",
               "1"}) == 0);
  w.vocab = w.dir / "vocab.txt";
  REQUIRE(run({"build-vocab", "--input", (w.out / "train.txt").string(),
               "--cap", "100", "--out", w.vocab.string()}) == 0);
  return w;
}

}  // namespace

TEST_CASE("unknown subcommands and flags exit nonzero") {
  CHECK(run({"frobnicate"}) != 0);
  CHECK(run({}) != 0);
  CHECK(run({"evaluate", "--no-such-flag"}) != 0);
  CHECK(run({"train"}) != 0);  // --seed and paths are required
}

TEST_CASE("preprocess produces canonical splits and a manifest") {
  auto w = prepared_workspace("ched_cli_prep");
  CHECK(fs::exists(w.out / "train.txt"));
  CHECK(fs::exists(w.out / "dev.txt"));
  CHECK(fs::exists(w.out / "test.txt"));
  CHECK(fs::exists(w.out / "split_manifest.txt"));

  // Deterministic: a second run is byte-identical.
  auto again = fresh_dir("ched_cli_prep_again");
  REQUIRE(run({"preprocess", "--format", "dailydialog", "--input",
               w.corpus.string(), "--out", again.string(), "--seed",
               "1"}) == 0);
  CHECK(slurp(w.out / "train.txt") == slurp(again / "train.txt"));
  CHECK(slurp(w.out / "split_manifest.txt") ==
        slurp(again / "split_manifest.txt"));
}

TEST_CASE("extract reproduces the evaluation-mode golden line") {
  auto dir = fresh_dir("ched_cli_extract");
  write_file(dir / "in.txt",
             "do you have any skirt that will go with this sweater ?\n");
  REQUIRE(run({"extract", "--input", (dir / "in.txt").string(), "--lexicon",
               kLexiconPath, "--mode", "eval", "--out",
               (dir / "out.txt").string()}) == 0);
  CHECK(slurp(dir / "out.txt") == "any skirt go sweater\n");

  REQUIRE(run({"extract", "--input", (dir / "in.txt").string(), "--lexicon",
               kLexiconPath, "--mode", "train", "--out",
               (dir / "out2.txt").string()}) == 0);
  CHECK(slurp(dir / "out2.txt") == "you any skirt go this sweater ?\n");
}

TEST_CASE("train twice with one seed gives byte-identical artifacts") {
  auto w = prepared_workspace("ched_cli_train");
  auto train_once = [&](const std::string& out_name) {
    auto out = w.dir / out_name;
    REQUIRE(run({"train", "--train", (w.out / "train.txt").string(),
                 "--vocab", w.vocab.string(), "--lexicon", kLexiconPath,
                 "--arch", "hed-ced", "--seed", "7", "--epochs", "2",
                 "--batch", "8", "--emb-size", "8", "--enc-hidden", "8",
                 "--dec-hidden", "8", "--attn-size", "8", "--out",
                 out.string()}) == 0);
    return out;
  };
  auto a = train_once("run_a");
  auto b = train_once("run_b");
  CHECK(slurp(a / "loss.log") == slurp(b / "loss.log"));
  CHECK(slurp(a / "final" / "params.bin") == slurp(b / "final" / "params.bin"));
  CHECK(slurp(a / "epoch_001" / "params.bin") ==
        slurp(b / "epoch_001" / "params.bin"));
  CHECK(fs::exists(a / "epoch_002" / "manifest.txt"));

  // Loss log format: epoch TAB content TAB sentence TAB total.
  std::istringstream log(slurp(a / "loss.log"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("generate and evaluate close the loop") {
  auto w = prepared_workspace("ched_cli_gen");
  auto ckpt = w.dir / "model";
  REQUIRE(run({"train", "--train", (w.out / "train.txt").string(), "--vocab",
               w.vocab.string(), "--lexicon", kLexiconPath, "--arch",
               "hed-cd", "--seed", "3", "--epochs", "1", "--batch", "8",
               "--emb-size", "8", "--enc-hidden", "8", "--dec-hidden", "8",
               "--attn-size", "8", "--out", ckpt.string()}) == 0);

  auto hyps = w.dir / "hyps.txt";
  auto refs = w.dir / "refs.txt";
  auto chat = w.dir / "content.txt";
  REQUIRE(run({"generate", "--checkpoint", (ckpt / "final").string(),
               "--vocab", w.vocab.string(), "--input",
               (w.out / "train.txt").string(), "--out", hyps.string(),
               "--content-out", chat.string(), "--refs-out",
               refs.string()}) == 0);

  // One line per context window, aligned across the three files.
  auto count_lines = [](const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
  };
  const int n = count_lines(hyps);
  CHECK(n > 0);
  CHECK(count_lines(refs) == n);
  CHECK(count_lines(chat) == n);

  // Self-evaluation: refs against refs gives the identity scores.
  auto report = w.dir / "report.txt";
  REQUIRE(run({"evaluate", "--refs", refs.string(), "--hyps", refs.string(),
               "--lexicon", kLexiconPath, "--out", report.string()}) == 0);
  auto text = slurp(report);
  CHECK(text.find("B1 100.00\n") != std::string::npos);
  CHECK(text.find("cCoverage 100.00\n") != std::string::npos);

  // And the generated hypotheses evaluate without error.
  REQUIRE(run({"evaluate", "--refs", refs.string(), "--hyps", hyps.string(),
               "--lexicon", kLexiconPath, "--out",
               (w.dir / "report2.txt").string()}) == 0);

  // Beam decoding also works end to end.
  REQUIRE(run({"generate", "--checkpoint", (ckpt / "final").string(),
               "--vocab", w.vocab.string(), "--input",
               (w.out / "test.txt").string(), "--out",
               (w.dir / "hyps_beam.txt").string(), "--beam", "3"}) == 0);
}

TEST_CASE("dialog act labels flow from preprocess into training") {
  auto dir = fresh_dir("ched_cli_acts");
  // Three-turn dialogs with per-turn act labels.
  std::string text, acts;
  for (int i = 0; i < 10; ++i) {
    text += "do you like tea ? __eou__ i like tea . __eou__ good . __eou__\n";
    acts += "2 1 1\n";
  }
  write_file(dir / "raw.txt", text);
  write_file(dir / "acts.txt", acts);
  auto prep = dir / "prep";
  REQUIRE(run({"preprocess", "--format", "dailydialog", "--input",
               (dir / "raw.txt").string(), "--acts",
               (dir / "acts.txt").string(), "--out", prep.string(), "--seed",
               "2"}) == 0);
  REQUIRE(fs::exists(prep / "train.acts.txt"));

  auto vocab = dir / "vocab.txt";
  REQUIRE(run({"build-vocab", "--input", (prep / "train.txt").string(),
               "--cap", "50", "--out", vocab.string()}) == 0);

  // Training with the DA head requires the acts file...
  CHECK(run({"train", "--train", (prep / "train.txt").string(), "--vocab",
             vocab.string(), "--lexicon", kLexiconPath, "--arch", "hed-ced",
             "--seed", "1", "--epochs", "1", "--batch", "8", "--emb-size",
             "8", "--enc-hidden", "8", "--dec-hidden", "8", "--attn-size",
             "8", "--da-head", "--out", (dir / "no_acts").string()}) != 0);

  // ...and succeeds with it.
  REQUIRE(run({"train", "--train", (prep / "train.txt").string(), "--acts",
               (prep / "train.acts.txt").string(), "--vocab", vocab.string(),
               "--lexicon", kLexiconPath, "--arch", "hed-ced", "--seed", "1",
               "--epochs", "1", "--batch", "8", "--emb-size", "8",
               "--enc-hidden", "8", "--dec-hidden", "8", "--attn-size", "8",
               "--da-head", "--out", (dir / "with_acts").string()}) == 0);
  CHECK(fs::exists(dir / "with_acts" / "final" / "params.bin"));
}

TEST_CASE("chat runs interactively through the real binary") {
  auto w = prepared_workspace("ched_cli_chat");
  auto ckpt = w.dir / "model";
  REQUIRE(run({"train", "--train", (w.out / "train.txt").string(), "--vocab",
               w.vocab.string(), "--lexicon", kLexiconPath, "--arch",
               "hed-ced", "--seed", "5", "--epochs", "1", "--batch", "8",
               "--emb-size", "8", "--enc-hidden", "8", "--dec-hidden", "8",
               "--attn-size", "8", "--out", ckpt.string()}) == 0);

  // Feed a few turns, including out-of-vocabulary words, an all-function
  // turn, and a blank line to quit.
  std::string cmd = std::string(CHED_CLI_PATH) + " chat --checkpoint " +
                    (ckpt / "final").string() + " --vocab " +
                    w.vocab.string() + " 2>&1";
  FILE* proc = popen(("printf 'do you like tea ?\\nxyzzy quux!\\nof the.\\n\\n' | " +
                      cmd).c_str(),
                     "r");
  REQUIRE(proc != nullptr);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof buf, proc)) output += buf;
  int status = pclose(proc);
  CHECK(status == 0);
  CHECK(output.find("c:") != std::string::npos);
  CHECK(output.find("y:") != std::string::npos);
}
