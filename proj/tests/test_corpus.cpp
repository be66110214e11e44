#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "ched/corpus.hpp"

using namespace ched;
using corpus::Dialog;
using corpus::Sentence;

TEST_CASE("tokenizer reproduces the documented rule set") {
  CHECK(corpus::tokenize("I will take the dog for a walk.") ==
        Sentence{"i", "will", "take", "the", "dog", "for", "a", "walk", "."});
  CHECK(corpus::tokenize("can't") == Sentence{"ca", "n't"});
  CHECK(corpus::tokenize("I'm sure it's fine") ==
        Sentence{"i", "'m", "sure", "it", "'s", "fine"});
  CHECK(corpus::tokenize("you've, they'll") ==
        Sentence{"you", "'ve", ",", "they", "'ll"});
  CHECK(corpus::tokenize("Hello, world!") ==
        Sentence{"hello", ",", "world", "!"});
  CHECK(corpus::tokenize("wait... what?") ==
        Sentence{"wait", "...", "what", "?"});
  CHECK(corpus::tokenize("boo-hoo bye-bye") == Sentence{"boo-hoo", "bye-bye"});
  CHECK(corpus::tokenize("o'clock") == Sentence{"o'clock"});
  CHECK(corpus::tokenize("'quoted'") == Sentence{"'", "quoted", "'"});
  CHECK(corpus::tokenize("stu...?") == Sentence{"stu", "...", "?"});
  CHECK(corpus::tokenize("  spaced   out  ") == Sentence{"spaced", "out"});
  CHECK(corpus::tokenize("") == Sentence{});
}

TEST_CASE("segmentation splits at terminal punctuation") {
  CHECK(corpus::segment("ok? sure!") ==
        std::vector<std::string>{"ok?", " sure!"});
  CHECK(corpus::segment("one. two! three") ==
        std::vector<std::string>{"one.", " two!", " three"});
  CHECK(corpus::segment("no terminal") ==
        std::vector<std::string>{"no terminal"});
  CHECK(corpus::segment("wait... go.") ==
        std::vector<std::string>{"wait...", " go."});
  CHECK(corpus::segment("") == std::vector<std::string>{});
}

TEST_CASE("parse_dailydialog splits on __eou__") {
  auto d = corpus::parse_dailydialog("hi ! __eou__ hello . __eou__");
  REQUIRE(d.has_value());
  CHECK(d->raw_turns == std::vector<std::string>{"hi !", "hello ."});

  CHECK_FALSE(corpus::parse_dailydialog("__eou__").has_value());
  CHECK_FALSE(corpus::parse_dailydialog("  __eou__  __eou__ ").has_value());

  auto three = corpus::parse_dailydialog("a __eou__ b __eou__ c __eou__");
  REQUIRE(three.has_value());
  REQUIRE(three->raw_turns.size() == 3);
  corpus::preprocess_dialog(*three);
  CHECK(three->turn_boundaries == std::vector<std::size_t>{1, 2});
}

TEST_CASE("parse_cornell_movie assembles conversations") {
  std::istringstream lines(
      "L1045 +++$+++ u0 +++$+++ m0 +++$+++ BIANCA +++$+++ They do not!\n"
      "L1044 +++$+++ u2 +++$+++ m0 +++$+++ CAMERON +++$+++ They do to!\n"
      "broken line\n");
  std::istringstream convs(
      "u0 +++$+++ u2 +++$+++ m0 +++$+++ ['L1044', 'L1045']\n"
      "u0 +++$+++ u2 +++$+++ m0 +++$+++ ['L9999']\n");
  corpus::CornellStats stats;
  auto dialogs = corpus::parse_cornell_movie(lines, convs, &stats);
  REQUIRE(dialogs.size() == 1);
  CHECK(dialogs[0].raw_turns ==
        std::vector<std::string>{"They do to!", "They do not!"});
  CHECK(stats.malformed_lines == 1);
  CHECK(stats.missing_line_ids == 1);
  CHECK(stats.empty_conversations == 1);
}

TEST_CASE("preprocess_dialog segments, tokenizes and truncates") {
  Dialog d;
  d.raw_turns = {"I will take the dog for a walk.", "ok? sure!"};
  corpus::preprocess_dialog(d);
  REQUIRE(d.sentences.size() == 3);
  CHECK(d.sentences[0] == Sentence{"i", "will", "take", "the", "dog", "for",
                                   "a", "walk", "."});
  CHECK(d.sentences[1] == Sentence{"ok", "?"});
  CHECK(d.sentences[2] == Sentence{"sure", "!"});
  CHECK(d.turn_boundaries == std::vector<std::size_t>{1});
  CHECK(d.sentence_turn == std::vector<int>{0, 1, 1});

  Dialog long_turn;
  std::string text;
  for (int i = 0; i < 45; ++i) text += "w" + std::to_string(i) + " ";
  long_turn.raw_turns = {text};
  corpus::preprocess_dialog(long_turn);
  REQUIRE(long_turn.sentences.size() == 1);
  CHECK(long_turn.sentences[0].size() == 40);
  CHECK(long_turn.sentences[0][0] == "w0");
  CHECK(long_turn.sentences[0][39] == "w39");
}

TEST_CASE("build_vocab orders by frequency then lexicographically") {
  Dialog d;
  d.raw_turns = {"a a a b b c"};
  corpus::preprocess_dialog(d);
  auto v = corpus::build_vocab({d}, 2);
  CHECK(v.size() == 6);  // 4 specials + a + b
  CHECK(v.encode("a") == 4);
  CHECK(v.encode("b") == 5);
  CHECK(v.encode("c") == corpus::Vocabulary::kUnk);

  CHECK_THROWS_AS(corpus::build_vocab({d}, 0), std::invalid_argument);

  auto empty = corpus::build_vocab({}, 10);
  CHECK(empty.size() == 4);
}

TEST_CASE("build_vocab matches a brute-force frequency oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Dialog d;
    std::string text;
    std::map<std::string, int> oracle_counts;
    for (int i = 0; i < 35; ++i) {  // stays under the truncation limit
      std::string tok(1, static_cast<char>('a' + rng.below(6)));
      text += tok + " ";
      ++oracle_counts[tok];
    }
    d.raw_turns = {text};
    corpus::preprocess_dialog(d);
    const int cap = 3;
    auto v = corpus::build_vocab({d}, cap);

    std::vector<std::pair<std::string, int>> sorted(oracle_counts.begin(),
                                                    oracle_counts.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (int i = 0; i < cap && i < static_cast<int>(sorted.size()); ++i) {
      CHECK(v.encode(sorted[i].first) == 4 + i);
    }
  }
}

TEST_CASE("vocabulary round trip and specials") {
  corpus::Vocabulary v;
  v.add("dog");
  v.add("walk");
  for (int id = 0; id < v.size(); ++id) {
    CHECK(v.encode(v.decode(id)) == id);
  }
  CHECK(v.decode(corpus::Vocabulary::kPad) == "<pad>");
  CHECK(v.decode(corpus::Vocabulary::kEos) == "<eos>");
  CHECK(v.encode("missing") == corpus::Vocabulary::kUnk);
  CHECK_THROWS_AS(v.decode(99), std::out_of_range);

  std::ostringstream saved;
  v.save(saved);
  std::istringstream loading(saved.str());
  auto v2 = corpus::Vocabulary::load(loading);
  CHECK(v2.size() == v.size());
  CHECK(v2.hash() == v.hash());
  CHECK(v2.encode("dog") == v.encode("dog"));

  std::istringstream bad("dog\nwalk\n");
  CHECK_THROWS_AS(corpus::Vocabulary::load(bad), std::runtime_error);
}

TEST_CASE("parse_dailydialog_acts reads space-separated labels") {
  CHECK(corpus::parse_dailydialog_acts("1 2 3 4") ==
        std::vector<int>{1, 2, 3, 4});
  CHECK(corpus::parse_dailydialog_acts("") == std::vector<int>{});
}

TEST_CASE("to_context_windows clips at the window size") {
  auto make_dialog = [](int n) {
    Dialog d;
    for (int i = 0; i < n; ++i) d.raw_turns.push_back("s" + std::to_string(i));
    corpus::preprocess_dialog(d);
    return d;
  };

  auto w3 = corpus::to_context_windows(make_dialog(3), 5);
  REQUIRE(w3.size() == 2);
  CHECK(w3[0].context.size() == 1);
  CHECK(w3[1].context.size() == 2);

  auto w7 = corpus::to_context_windows(make_dialog(7), 5);
  REQUIRE(w7.size() == 6);
  CHECK(w7.back().context.size() == 5);
  CHECK(w7.back().response == Sentence{"s6"});
  CHECK(w7.back().context.front() == Sentence{"s1"});

  CHECK(corpus::to_context_windows(make_dialog(1), 5).empty());

  // Window bound and contiguity over every produced window.
  for (const auto& w : w7) {
    CHECK(w.context.size() >= 1);
    CHECK(w.context.size() <= 5);
  }
}

TEST_CASE("canonical format round-trips and is deterministic") {
  Dialog a;
  a.raw_turns = {"I will take the dog for a walk.", "ok? sure!"};
  corpus::preprocess_dialog(a);
  Dialog b;
  b.raw_turns = {"hello there."};
  corpus::preprocess_dialog(b);

  std::ostringstream out1, out2;
  corpus::write_canonical(out1, {a, b});
  corpus::write_canonical(out2, {a, b});
  CHECK(out1.str() == out2.str());

  std::istringstream in(out1.str());
  auto loaded = corpus::read_canonical(in);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded[0].sentences.size() == a.sentences.size());
  CHECK(loaded[0].sentences == a.sentences);
  CHECK(loaded[1].sentences == b.sentences);

  std::ostringstream out3;
  corpus::write_canonical(out3, loaded);
  CHECK(out3.str() == out1.str());
}

TEST_CASE("acts propagate from turns to response windows") {
  Dialog d;
  d.raw_turns = {"how are you?", "fine. thanks!"};
  d.turn_acts = {2, 1};
  corpus::preprocess_dialog(d);
  REQUIRE(d.sentences.size() == 3);
  auto ws = corpus::to_context_windows(d, 5);
  REQUIRE(ws.size() == 2);
  CHECK(ws[0].response_act == 1);  // "fine ." belongs to turn 2
  CHECK(ws[1].response_act == 1);

  std::ostringstream text_out, acts_out;
  corpus::write_canonical(text_out, {d});
  corpus::write_acts(acts_out, {d});
  CHECK(acts_out.str() == "2\t1\t1\n");

  std::istringstream text_in(text_out.str());
  auto loaded = corpus::read_canonical(text_in);
  std::istringstream acts_in(acts_out.str());
  corpus::read_acts(acts_in, loaded);
  auto ws2 = corpus::to_context_windows(loaded[0], 5);
  REQUIRE(ws2.size() == 2);
  CHECK(ws2[0].response_act == 1);
  CHECK(ws2[1].response_act == 1);
}

TEST_CASE("split_dialogs is seeded and dialog-level") {
  std::vector<Dialog> dialogs;
  for (int i = 0; i < 100; ++i) {
    Dialog d;
    d.raw_turns = {"t" + std::to_string(i), "u" + std::to_string(i)};
    corpus::preprocess_dialog(d);
    dialogs.push_back(d);
  }
  auto s1 = corpus::split_dialogs(dialogs, 42);
  auto s2 = corpus::split_dialogs(dialogs, 42);
  CHECK(s1.assignment == s2.assignment);
  CHECK(s1.train.size() == 80);
  CHECK(s1.dev.size() == 10);
  CHECK(s1.test.size() == 10);

  auto s3 = corpus::split_dialogs(dialogs, 43);
  CHECK(s1.assignment != s3.assignment);
}
