#include "ched/lexicon.hpp"

#include <array>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ched::lex {

namespace {

std::uint8_t bit(Category c) {
  return static_cast<std::uint8_t>(1u << static_cast<unsigned>(c));
}

const std::unordered_map<std::string, Category> kCategoryNames = {
    {"article", Category::kArticle},
    {"pronoun", Category::kPronoun},
    {"preposition", Category::kPreposition},
    {"conjunction", Category::kConjunction},
    {"auxiliary", Category::kAuxiliary},
    {"interjection", Category::kInterjection},
    {"particle", Category::kParticle},
    {"punctuation", Category::kPunctuation},
};

}  // namespace

std::uint8_t active_category_mask(ExtractionMode mode) {
  std::uint8_t all = 0xff;
  if (mode == ExtractionMode::kTraining) {
    all &= static_cast<std::uint8_t>(
        ~(bit(Category::kPronoun) | bit(Category::kPunctuation)));
  }
  return all;
}

FunctionLexicon FunctionLexicon::load(std::istream& in,
                                      const Vocabulary* corpus_vocab) {
  FunctionLexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("lexicon line " + std::to_string(lineno) +
                               ": missing `category:` prefix");
    }
    std::string tag = line.substr(0, colon);
    auto it = kCategoryNames.find(tag);
    if (it == kCategoryNames.end()) {
      throw std::runtime_error("lexicon line " + std::to_string(lineno) +
                               ": unknown category `" + tag + "`");
    }
    std::istringstream words(line.substr(colon + 1));
    std::string w;
    while (words >> w) {
      if (corpus_vocab && !corpus_vocab->contains(w)) continue;
      lex.entries_[w] |= bit(it->second);
    }
  }
  return lex;
}

std::uint8_t FunctionLexicon::categories(const Token& w) const {
  auto it = entries_.find(w);
  return it == entries_.end() ? 0 : it->second;
}

bool FunctionLexicon::has_category(const Token& w, Category c) const {
  return (categories(w) & bit(c)) != 0;
}

bool FunctionLexicon::is_function_word(const Token& w,
                                       ExtractionMode mode) const {
  return (categories(w) & active_category_mask(mode)) != 0;
}

namespace {

// Irregular forms. Every target is a fixed point of lemmatize().
const std::unordered_map<std::string, std::string>& exception_table() {
  static const std::unordered_map<std::string, std::string> table = {
      {"made", "make"},       {"took", "take"},      {"taken", "take"},
      {"went", "go"},         {"gone", "go"},        {"said", "say"},
      {"got", "get"},         {"gotten", "get"},     {"came", "come"},
      {"knew", "know"},       {"known", "know"},     {"thought", "think"},
      {"saw", "see"},         {"seen", "see"},       {"gave", "give"},
      {"given", "give"},      {"found", "find"},     {"told", "tell"},
      {"felt", "feel"},       {"left", "leave"},     {"kept", "keep"},
      {"began", "begin"},     {"begun", "begin"},    {"brought", "bring"},
      {"bought", "buy"},      {"heard", "hear"},     {"held", "hold"},
      {"ran", "run"},         {"met", "meet"},       {"paid", "pay"},
      {"sat", "sit"},         {"spoke", "speak"},    {"spoken", "speak"},
      {"stood", "stand"},     {"understood", "understand"},
      {"wrote", "write"},     {"written", "write"},  {"won", "win"},
      {"sent", "send"},       {"built", "build"},    {"spent", "spend"},
      {"lost", "lose"},       {"meant", "mean"},     {"ate", "eat"},
      {"eaten", "eat"},       {"fell", "fall"},      {"fallen", "fall"},
      {"drew", "draw"},       {"drawn", "draw"},     {"drove", "drive"},
      {"driven", "drive"},    {"flew", "fly"},       {"flown", "fly"},
      {"grew", "grow"},       {"grown", "grow"},     {"threw", "throw"},
      {"thrown", "throw"},    {"wore", "wear"},      {"worn", "wear"},
      {"chose", "choose"},    {"chosen", "choose"},  {"broke", "break"},
      {"broken", "break"},    {"slept", "sleep"},    {"taught", "teach"},
      {"caught", "catch"},    {"sold", "sell"},      {"sang", "sing"},
      {"sung", "sing"},       {"drank", "drink"},    {"drunk", "drink"},
      {"rode", "ride"},       {"ridden", "ride"},    {"rose", "rise"},
      {"risen", "rise"},      {"woke", "wake"},      {"woken", "wake"},
      {"forgot", "forget"},   {"forgotten", "forget"},
      {"became", "become"},   {"done", "do"},        {"did", "do"},
      {"was", "be"},          {"were", "be"},        {"been", "be"},
      {"being", "be"},        {"had", "have"},       {"has", "have"},
      {"men", "man"},         {"women", "woman"},    {"children", "child"},
      {"feet", "foot"},       {"teeth", "tooth"},    {"mice", "mouse"},
      {"geese", "goose"},     {"wives", "wife"},     {"knives", "knife"},
      {"halves", "half"},     {"movies", "movie"},   {"cookies", "cookie"},
      {"excited", "excite"},  {"lying", "lie"},      {"dying", "die"},
      {"tying", "tie"},       {"used", "use"},       {"using", "use"},
      {"going", "go"},        {"doing", "do"},
  };
  return table;
}

// Words the suffix rules would mangle.
const std::unordered_set<std::string>& no_touch_set() {
  static const std::unordered_set<std::string> set = {
      "always",   "perhaps",  "news",    "series",   "species",
      "sometimes","christmas","during",  "morning",  "evening",
      "ceiling",  "anything", "something","nothing", "everything",
      "darling",  "clothing", "indeed",  "hundred",  "naked",
      "wicked",   "sacred",   "hatred",  "thing",
  };
  return set;
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

int vowel_groups(const std::string& w) {
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    if (is_vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  return groups;
}

bool ends_with_any(const std::string& w,
                   std::initializer_list<const char*> sufs) {
  for (const char* s : sufs) {
    if (w.ends_with(s)) return true;
  }
  return false;
}

// Repairs a stem left over after stripping -ing/-ed: undoubles final
// consonants, turns final -i back into -y, restores a dropped -e.
std::string repair_stem(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      std::string("lszdf").find(stem[n - 1]) == std::string::npos) {
    stem.pop_back();
    return stem;
  }
  if (stem.back() == 'i') {
    stem.back() = 'y';
    return stem;
  }
  if (stem.back() == 'e') {  // "agre" from "agreed"
    stem.push_back('e');
    return stem;
  }
  if (is_vowel(stem.back()) || stem.back() == 'y') return stem;
  // Letters that do not end English words bare after inflection stripping.
  if (ends_with_any(stem, {"v", "c", "g", "z"}) ||
      (stem.ends_with("s") && !stem.ends_with("ss"))) {
    stem.push_back('e');
    return stem;
  }
  // Single-syllable consonant-vowel-consonant stems drop a silent e.
  if (vowel_groups(stem) == 1 && n >= 3 && !is_vowel(stem[n - 1]) &&
      is_vowel(stem[n - 2]) && !is_vowel(stem[n - 3])) {
    stem.push_back('e');
  }
  return stem;
}

}  // namespace

namespace {

Token lemmatize_once(const Token& w) {
  const auto& exceptions = exception_table();
  if (auto it = exceptions.find(w); it != exceptions.end()) return it->second;
  if (w.size() < 4) return w;
  if (no_touch_set().count(w) > 0 || w.ends_with("ics")) return w;

  if (w.ends_with("ies")) {
    if (w.size() == 4) return w.substr(0, 3);          // ties -> tie
    return w.substr(0, w.size() - 3) + "y";            // skies -> sky
  }
  if (w.ends_with("es") &&
      ends_with_any(w, {"ches", "shes", "xes", "zes", "sses", "oes"})) {
    return w.substr(0, w.size() - 2);                  // boxes -> box
  }
  if (w.ends_with("s") && !ends_with_any(w, {"ss", "us", "is"})) {
    return w.substr(0, w.size() - 1);                  // skirts -> skirt
  }
  if (w.ends_with("ing") && w.size() >= 6) {
    std::string stem = w.substr(0, w.size() - 3);
    if (vowel_groups(stem) >= 1) return repair_stem(std::move(stem));
    return w;                                          // spring, string
  }
  if (w.ends_with("ed") && w.size() >= 5) {
    std::string stem = w.substr(0, w.size() - 2);
    if (vowel_groups(stem) >= 1) return repair_stem(std::move(stem));
    return w;
  }
  return w;
}

}  // namespace

Token lemmatize(const Token& w) {
  // Iterate to a fixed point so stacked inflections ("meetings") cannot
  // break idempotence.
  Token cur = w;
  for (int i = 0; i < 4; ++i) {
    Token next = lemmatize_once(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

ContentSequence extract_content_sequence(const Sentence& s,
                                         const FunctionLexicon& lex,
                                         ExtractionMode mode) {
  ContentSequence out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Token& w = s[i];
    if (lex.is_function_word(w, mode)) continue;
    Token kept;
    if (lex.contains(w)) {
      // Listed only under inactive categories (pronoun/punctuation during
      // training): keep the surface form.
      kept = w;
    } else {
      kept = lemmatize(w);
      // A lemma can itself collapse onto a function word ("wills" -> "will").
      if (lex.is_function_word(kept, mode)) continue;
    }
    out.lemmas.push_back(std::move(kept));
    out.source_positions.push_back(i);
  }
  return out;
}

std::vector<Token> build_insert_pool(const Vocabulary& vocab,
                                     const FunctionLexicon& lex,
                                     ExtractionMode mode) {
  std::vector<Token> pool;
  for (int id = Vocabulary::kNumSpecials; id < vocab.size(); ++id) {
    const Token& w = vocab.decode(id);
    if (!lex.is_function_word(w, mode)) pool.push_back(w);
  }
  return pool;
}

ContentSequence inject_noise(const ContentSequence& c, Rng& rng,
                             const std::vector<Token>& insert_pool) {
  ContentSequence out;
  out.lemmas = inject_noise_seq(c.lemmas, rng, insert_pool);
  return out;
}

}  // namespace ched::lex
