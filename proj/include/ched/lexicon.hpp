#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "ched/corpus.hpp"
#include "ched/rng.hpp"

namespace ched::lex {

using corpus::Sentence;
using corpus::Token;
using corpus::Vocabulary;

enum class Category : std::uint8_t {
  kArticle = 0,
  kPronoun,
  kPreposition,
  kConjunction,
  kAuxiliary,
  kInterjection,
  kParticle,
  kPunctuation,
};
constexpr int kNumCategories = 8;

// Pronouns and punctuation count as content words while building training
// sequences; they are function words again at evaluation time.
enum class ExtractionMode { kTraining, kEvaluation };

std::uint8_t active_category_mask(ExtractionMode mode);

class FunctionLexicon {
 public:
  // File format: one line per category, `category: w1 w2 ...`. Unknown
  // category tags are a fatal parse error. When `corpus_vocab` is given the
  // lexicon is adapted to the corpus: absent words are dropped.
  static FunctionLexicon load(std::istream& in,
                              const Vocabulary* corpus_vocab = nullptr);

  bool contains(const Token& w) const { return entries_.count(w) > 0; }
  // Bitmask over Category; 0 when absent.
  std::uint8_t categories(const Token& w) const;
  bool has_category(const Token& w, Category c) const;
  // True when any of the word's categories is active under `mode`.
  bool is_function_word(const Token& w, ExtractionMode mode) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<Token, std::uint8_t> entries_;
};

// Exception table + suffix rules (-ies/-es/-s/-ing/-ed with guards). Words
// shorter than 4 characters pass through unless the table knows them.
// Expects lowercase input.
Token lemmatize(const Token& w);

struct ContentSequence {
  std::vector<Token> lemmas;
  // Indices into the source sentence; aligned with `lemmas` for extraction
  // output, empty after noise injection (positions stop being meaningful).
  std::vector<std::size_t> source_positions;

  std::size_t size() const { return lemmas.size(); }
  bool empty() const { return lemmas.empty(); }
  bool operator==(const ContentSequence& o) const {
    return lemmas == o.lemmas;
  }
};

// Drops every token whose surface form (or resulting lemma) is an active
// function word under `mode`, lemmatizes the other survivors, keeps order.
// Tokens listed in the lexicon only under inactive categories (pronouns and
// punctuation during training) pass through with their surface form.
ContentSequence extract_content_sequence(const Sentence& s,
                                         const FunctionLexicon& lex,
                                         ExtractionMode mode);

// Corpus vocabulary minus active function words and specials, in id order.
std::vector<Token> build_insert_pool(const Vocabulary& vocab,
                                     const FunctionLexicon& lex,
                                     ExtractionMode mode);

// Applies exactly one of Remove / Repeat / Insert, chosen uniformly.
// Empty input comes back unchanged. Works on any token-like element.
template <class T>
std::vector<T> inject_noise_seq(const std::vector<T>& c, Rng& rng,
                                const std::vector<T>& insert_pool) {
  std::vector<T> out = c;
  if (out.empty()) return out;
  switch (rng.below(3)) {
    case 0: {  // Remove
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(rng.below(out.size())));
      break;
    }
    case 1: {  // Repeat: duplicate right after the chosen position
      std::size_t pos = rng.below(out.size());
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos + 1), out[pos]);
      break;
    }
    default: {  // Insert a pool token at a uniform position (0..|c|)
      const T& tok = insert_pool[rng.below(insert_pool.size())];
      std::size_t pos = rng.below(out.size() + 1);
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), tok);
      break;
    }
  }
  return out;
}

ContentSequence inject_noise(const ContentSequence& c, Rng& rng,
                             const std::vector<Token>& insert_pool);

}  // namespace ched::lex
