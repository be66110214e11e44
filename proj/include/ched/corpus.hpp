#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ched/rng.hpp"

namespace ched::corpus {

// Tokens are plain lowercase strings without whitespace; id-encoding is a
// separate step through Vocabulary.
using Token = std::string;
using Sentence = std::vector<Token>;

constexpr int kMaxSentenceLen = 40;

struct Dialog {
  // Raw turn text as parsed from the source corpus. Cleared semantics:
  // preprocess() consumes raw_turns and fills sentences/turn_boundaries.
  std::vector<std::string> raw_turns;
  // DA label per raw turn (1..4), empty when the corpus has none.
  std::vector<int> turn_acts;

  // After preprocessing: flat sentence list and the sentence indices where a
  // new speaker turn starts (excluding index 0, strictly increasing).
  std::vector<Sentence> sentences;
  std::vector<std::size_t> turn_boundaries;
  // Turn index of each sentence, parallel to `sentences`.
  std::vector<int> sentence_turn;

  std::size_t size() const { return sentences.size(); }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  // Appends a non-special token. Returns its id.
  int add(const std::string& token);

  int encode(const std::string& token) const;  // kUnk when absent
  const std::string& decode(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  std::vector<int> encode_sentence(const Sentence& s) const;
  Sentence decode_ids(const std::vector<int>& ids) const;

  // FNV-1a over the ordered token list; pins a checkpoint to its vocabulary.
  std::uint64_t hash() const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Rule tokenizer: lowercase, split on whitespace, detach edge punctuation
// (, . ! ? ' - and dot runs as "..."), split clitics ('s n't 're 've 'll 'd
// 'm) into their own tokens.
Sentence tokenize(const std::string& text);

// Splits turn text into sentence chunks at . ! ? runs followed by
// whitespace or end of text. The punctuation stays with its sentence.
std::vector<std::string> segment(const std::string& turn);

// One dialog per line, turns separated by "__eou__". Returns nullopt when
// the line has no non-empty turn (caller decides how to warn).
std::optional<Dialog> parse_dailydialog(const std::string& raw_line);

// Parallel act labels for one dialogues_act.txt line (space-separated ints).
std::vector<int> parse_dailydialog_acts(const std::string& raw_line);

struct CornellStats {
  std::size_t malformed_lines = 0;
  std::size_t missing_line_ids = 0;
  std::size_t empty_conversations = 0;
};

// Cornell movie corpus: ` +++$+++ `-delimited movie_lines / conversations
// files. Unresolvable line ids are dropped and counted in stats.
std::vector<Dialog> parse_cornell_movie(std::istream& lines_file,
                                        std::istream& conversations_file,
                                        CornellStats* stats = nullptr);

// Segmentation + tokenization + truncation over raw_turns. Turns that end
// up empty are dropped; a dialog may come back with zero sentences.
void preprocess_dialog(Dialog& d, int max_len = kMaxSentenceLen);

// Top-`cap` tokens by frequency, ties broken lexicographically; throws
// std::invalid_argument when cap < 1.
Vocabulary build_vocab(const std::vector<Dialog>& dialogs, int cap);

struct ContextWindow {
  std::vector<Sentence> context;  // up to `window` sentences, oldest first
  Sentence response;
  int response_act = 0;  // DA label of the response turn, 0 when unknown
};

std::vector<ContextWindow> to_context_windows(const Dialog& d, int window = 5);

// Canonical preprocessed format: one dialog per line, sentence units joined
// by TAB, tokens joined by single spaces.
void write_canonical(std::ostream& out, const std::vector<Dialog>& dialogs);
std::vector<Dialog> read_canonical(std::istream& in);

// Aligned act labels, same line/TAB layout as the canonical text file.
void write_acts(std::ostream& out, const std::vector<Dialog>& dialogs);
void read_acts(std::istream& in, std::vector<Dialog>& dialogs);

struct SplitResult {
  std::vector<Dialog> train, dev, test;
  std::vector<int> assignment;  // 0/1/2 per input dialog, input order
};

// Dialog-level 0.8/0.1/0.1 split with a seeded shuffle.
SplitResult split_dialogs(std::vector<Dialog> dialogs, std::uint64_t seed);

}  // namespace ched::corpus
