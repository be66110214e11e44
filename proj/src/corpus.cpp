#include "ched/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ched::corpus {

namespace {

const std::string kSpecials[Vocabulary::kNumSpecials] = {"<pad>", "<unk>",
                                                         "<sos>", "<eos>"};

bool is_edge_punct(char c) {
  return c == ',' || c == '.' || c == '!' || c == '?' || c == '\'' || c == '-';
}

bool is_clitic(const std::string& w) {
  static const std::vector<std::string> kClitics = {"n't", "'s", "'re", "'ve",
                                                    "'ll", "'d",  "'m"};
  return std::find(kClitics.begin(), kClitics.end(), w) != kClitics.end();
}

// Splits a trailing clitic off `w`, returning {stem, clitic} or nullopt.
std::optional<std::pair<std::string, std::string>> split_clitic(
    const std::string& w) {
  static const std::vector<std::string> kSuffixes = {"n't", "'re", "'ve",
                                                     "'ll", "'s",  "'d", "'m"};
  for (const auto& suf : kSuffixes) {
    if (w.size() > suf.size() && w.ends_with(suf)) {
      return std::make_pair(w.substr(0, w.size() - suf.size()), suf);
    }
  }
  return std::nullopt;
}

// Tokenizes one whitespace-free word: edge punctuation is detached, clitics
// split off, inner hyphens/apostrophes left alone ("boo-hoo", "o'clock").
void tokenize_word(const std::string& word, Sentence& out) {
  if (word.empty()) return;
  if (is_clitic(word)) {
    out.push_back(word);
    return;
  }
  std::size_t lo = 0, hi = word.size();
  std::vector<std::string> tail;  // stripped suffix tokens, innermost last
  while (lo < hi && is_edge_punct(word[lo])) {
    out.push_back(std::string(1, word[lo]));
    ++lo;
  }
  while (hi > lo && is_edge_punct(word[hi - 1])) {
    tail.push_back(std::string(1, word[hi - 1]));
    --hi;
  }
  std::string core = word.substr(lo, hi - lo);
  if (!core.empty()) {
    std::vector<std::string> parts{core};
    // Clitics can stack ("can't've"); peel until stable.
    for (bool more = true; more;) {
      more = false;
      if (auto sp = split_clitic(parts.front())) {
        parts.front() = sp->second;
        parts.insert(parts.begin(), sp->first);
        more = true;
      }
    }
    for (auto& p : parts) out.push_back(std::move(p));
  }
  for (auto it = tail.rbegin(); it != tail.rend(); ++it) out.push_back(*it);
}

}  // namespace

Sentence tokenize(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (unsigned char c : text) {
    lowered.push_back(static_cast<char>(std::tolower(c)));
  }

  Sentence out;
  std::size_t i = 0;
  const std::size_t n = lowered.size();
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) {
      tokenize_word(word, out);
      word.clear();
    }
  };
  while (i < n) {
    char c = lowered[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush_word();
      ++i;
    } else if (c == '.' && i + 1 < n && lowered[i + 1] == '.') {
      // Any run of two or more dots becomes an ellipsis token.
      flush_word();
      while (i < n && lowered[i] == '.') ++i;
      out.push_back("...");
    } else {
      word.push_back(c);
      ++i;
    }
  }
  flush_word();
  return out;
}

std::vector<std::string> segment(const std::string& turn) {
  std::vector<std::string> chunks;
  std::string cur;
  std::size_t i = 0;
  const std::size_t n = turn.size();
  auto is_terminal = [](char c) { return c == '.' || c == '!' || c == '?'; };
  while (i < n) {
    char c = turn[i];
    cur.push_back(c);
    if (is_terminal(c)) {
      while (i + 1 < n && is_terminal(turn[i + 1])) {
        cur.push_back(turn[++i]);
      }
      if (i + 1 >= n ||
          std::isspace(static_cast<unsigned char>(turn[i + 1]))) {
        chunks.push_back(cur);
        cur.clear();
      }
    }
    ++i;
  }
  if (cur.find_first_not_of(" \t\r\n") != std::string::npos) {
    chunks.push_back(cur);
  }
  return chunks;
}

std::optional<Dialog> parse_dailydialog(const std::string& raw_line) {
  static const std::string kMarker = "__eou__";
  Dialog d;
  std::size_t pos = 0;
  while (pos <= raw_line.size()) {
    std::size_t next = raw_line.find(kMarker, pos);
    std::string piece = raw_line.substr(
        pos, next == std::string::npos ? std::string::npos : next - pos);
    std::size_t b = piece.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      std::size_t e = piece.find_last_not_of(" \t\r\n");
      d.raw_turns.push_back(piece.substr(b, e - b + 1));
    }
    if (next == std::string::npos) break;
    pos = next + kMarker.size();
  }
  if (d.raw_turns.empty()) return std::nullopt;
  return d;
}

std::vector<int> parse_dailydialog_acts(const std::string& raw_line) {
  std::vector<int> acts;
  std::istringstream in(raw_line);
  int a;
  while (in >> a) acts.push_back(a);
  return acts;
}

namespace {

std::vector<std::string> split_delim(const std::string& line,
                                     const std::string& delim) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return fields;
}

}  // namespace

std::vector<Dialog> parse_cornell_movie(std::istream& lines_file,
                                        std::istream& conversations_file,
                                        CornellStats* stats) {
  static const std::string kDelim = " +++$+++ ";
  CornellStats local;
  CornellStats& st = stats ? *stats : local;

  std::unordered_map<std::string, std::string> text_by_id;
  std::string line;
  while (std::getline(lines_file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_delim(line, kDelim);
    if (fields.size() < 5) {
      ++st.malformed_lines;
      continue;
    }
    // Re-join in case the utterance itself contains the delimiter.
    std::string text = fields[4];
    for (std::size_t i = 5; i < fields.size(); ++i) text += kDelim + fields[i];
    text_by_id[fields[0]] = text;
  }

  std::vector<Dialog> dialogs;
  while (std::getline(conversations_file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_delim(line, kDelim);
    if (fields.size() < 4) {
      ++st.malformed_lines;
      continue;
    }
    // Last field looks like ['L194', 'L195', ...]; pull the quoted ids.
    const std::string& list = fields.back();
    Dialog d;
    std::size_t pos = 0;
    while (true) {
      std::size_t open = list.find('\'', pos);
      if (open == std::string::npos) break;
      std::size_t close = list.find('\'', open + 1);
      if (close == std::string::npos) break;
      std::string id = list.substr(open + 1, close - open - 1);
      auto it = text_by_id.find(id);
      if (it == text_by_id.end()) {
        ++st.missing_line_ids;
      } else if (!it->second.empty()) {
        d.raw_turns.push_back(it->second);
      }
      pos = close + 1;
    }
    if (d.raw_turns.empty()) {
      ++st.empty_conversations;
      continue;
    }
    dialogs.push_back(std::move(d));
  }
  return dialogs;
}

void preprocess_dialog(Dialog& d, int max_len) {
  d.sentences.clear();
  d.turn_boundaries.clear();
  d.sentence_turn.clear();
  int prev_turn = -1;
  for (std::size_t t = 0; t < d.raw_turns.size(); ++t) {
    for (const auto& chunk : segment(d.raw_turns[t])) {
      Sentence toks = tokenize(chunk);
      if (toks.empty()) continue;
      if (static_cast<int>(toks.size()) > max_len) {
        toks.resize(static_cast<std::size_t>(max_len));
      }
      if (static_cast<int>(t) != prev_turn && !d.sentences.empty()) {
        d.turn_boundaries.push_back(d.sentences.size());
      }
      prev_turn = static_cast<int>(t);
      d.sentences.push_back(std::move(toks));
      d.sentence_turn.push_back(static_cast<int>(t));
    }
  }
}

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecials) {
    token_to_id_.emplace(s, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(s);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::encode(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocabulary id out of range: " +
                            std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

std::vector<int> Vocabulary::encode_sentence(const Sentence& s) const {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (const auto& t : s) ids.push_back(encode(t));
  return ids;
}

Sentence Vocabulary::decode_ids(const std::vector<int>& ids) const {
  Sentence s;
  s.reserve(ids.size());
  for (int id : ids) s.push_back(decode(id));
  return s;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& t : id_to_token_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  return h;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (idx < kNumSpecials) {
      if (line != kSpecials[idx]) {
        throw std::runtime_error("vocabulary file: expected special token " +
                                 kSpecials[idx] + ", got " + line);
      }
    } else {
      v.add(line);
    }
    ++idx;
  }
  if (idx < kNumSpecials) {
    throw std::runtime_error("vocabulary file: missing special tokens");
  }
  return v;
}

Vocabulary build_vocab(const std::vector<Dialog>& dialogs, int cap) {
  if (cap < 1) throw std::invalid_argument("vocabulary cap must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& d : dialogs) {
    for (const auto& s : d.sentences) {
      for (const auto& t : s) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(),
                                                          counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (std::size_t i = 0; i < items.size() && i < static_cast<std::size_t>(cap);
       ++i) {
    v.add(items[i].first);
  }
  return v;
}

std::vector<ContextWindow> to_context_windows(const Dialog& d, int window) {
  std::vector<ContextWindow> out;
  const std::size_t n = d.sentences.size();
  for (std::size_t i = 1; i < n; ++i) {
    ContextWindow w;
    std::size_t lo = i > static_cast<std::size_t>(window)
                         ? i - static_cast<std::size_t>(window)
                         : 0;
    for (std::size_t j = lo; j < i; ++j) w.context.push_back(d.sentences[j]);
    w.response = d.sentences[i];
    if (!d.turn_acts.empty() && i < d.sentence_turn.size()) {
      int turn = d.sentence_turn[i];
      if (turn >= 0 && turn < static_cast<int>(d.turn_acts.size())) {
        w.response_act = d.turn_acts[static_cast<std::size_t>(turn)];
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

void write_canonical(std::ostream& out, const std::vector<Dialog>& dialogs) {
  for (const auto& d : dialogs) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      if (i > 0) out << '\t';
      const auto& s = d.sentences[i];
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j > 0) out << ' ';
        out << s[j];
      }
    }
    out << '\n';
  }
}

std::vector<Dialog> read_canonical(std::istream& in) {
  std::vector<Dialog> dialogs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Dialog d;
    for (const auto& field : split_delim(line, "\t")) {
      Sentence s;
      std::istringstream ss(field);
      std::string tok;
      while (ss >> tok) s.push_back(tok);
      if (s.empty()) continue;
      if (!d.sentences.empty()) d.turn_boundaries.push_back(d.sentences.size());
      d.sentence_turn.push_back(static_cast<int>(d.sentences.size()));
      d.sentences.push_back(std::move(s));
    }
    if (!d.sentences.empty()) dialogs.push_back(std::move(d));
  }
  return dialogs;
}

void write_acts(std::ostream& out, const std::vector<Dialog>& dialogs) {
  for (const auto& d : dialogs) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      if (i > 0) out << '\t';
      int act = 0;
      if (!d.turn_acts.empty() && i < d.sentence_turn.size()) {
        int turn = d.sentence_turn[i];
        if (turn >= 0 && turn < static_cast<int>(d.turn_acts.size())) {
          act = d.turn_acts[static_cast<std::size_t>(turn)];
        }
      }
      out << act;
    }
    out << '\n';
  }
}

void read_acts(std::istream& in, std::vector<Dialog>& dialogs) {
  std::string line;
  std::size_t di = 0;
  while (std::getline(in, line) && di < dialogs.size()) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Dialog& d = dialogs[di++];
    d.turn_acts.clear();
    for (const auto& field : split_delim(line, "\t")) {
      d.turn_acts.push_back(std::atoi(field.c_str()));
    }
    if (d.turn_acts.size() != d.sentences.size()) {
      throw std::runtime_error("acts file out of alignment at dialog " +
                               std::to_string(di));
    }
    // Canonical acts are per sentence unit.
    d.sentence_turn.resize(d.sentences.size());
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      d.sentence_turn[i] = static_cast<int>(i);
    }
  }
}

SplitResult split_dialogs(std::vector<Dialog> dialogs, std::uint64_t seed) {
  const std::size_t n = dialogs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_train = static_cast<std::size_t>(0.8 * n);
  const std::size_t n_dev = static_cast<std::size_t>(0.1 * n);

  SplitResult r;
  r.assignment.assign(n, 2);
  for (std::size_t k = 0; k < n; ++k) {
    int bucket = k < n_train ? 0 : (k < n_train + n_dev ? 1 : 2);
    r.assignment[order[k]] = bucket;
  }
  for (std::size_t i = 0; i < n; ++i) {
    switch (r.assignment[i]) {
      case 0: r.train.push_back(std::move(dialogs[i])); break;
      case 1: r.dev.push_back(std::move(dialogs[i])); break;
      default: r.test.push_back(std::move(dialogs[i])); break;
    }
  }
  return r;
}

}  // namespace ched::corpus
