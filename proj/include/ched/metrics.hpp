#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "ched/corpus.hpp"
#include "ched/lexicon.hpp"

namespace ched::metrics {

using corpus::Sentence;
using corpus::Vocabulary;

class EmbeddingTable {
 public:
  // Text format: token then D float literals per line. Dimension comes from
  // the first line and is enforced; lines with malformed floats are skipped
  // (counted in *skipped). Only tokens of `vocab` are kept when given.
  static EmbeddingTable load(std::istream& in,
                             const Vocabulary* vocab = nullptr,
                             std::size_t* skipped = nullptr);

  void insert(const std::string& token, std::vector<float> vec);
  const std::vector<float>* find(const std::string& token) const;
  int dimension() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, std::vector<float>> table_;
  int dim_ = 0;
};

// Order-n modified precision times the brevity penalty
// min(1, exp(1 - |ref|/|hyp|)), as a percentage. B2 is the bigram precision
// alone, not a geometric mean. Empty hypothesis scores 0; empty reference
// is an error.
double sentence_bleu(const Sentence& ref, const Sentence& hyp, int n);

enum class EmbMode { kAverage, kExtrema, kGreedy };

// Cosine similarity of sentence vectors as a percentage. Tokens missing
// from the table are skipped; when either side has no embeddable token the
// score is 0 and *embeddable (if given) is set to false.
double embedding_similarity(const Sentence& ref, const Sentence& hyp,
                            const EmbeddingTable& table, EmbMode mode,
                            bool* embeddable = nullptr);

// Number of distinct n-gram types pooled over all hypotheses.
long distinct_ngrams(const std::vector<Sentence>& corpus_hyps, int n);

// |types(c_ref) & types(c_hyp)| / |types(c_ref)| * 100. Empty reference
// content is an error (undefined denominator).
double content_coverage(const lex::ContentSequence& c_ref,
                        const lex::ContentSequence& c_hyp);

struct MetricReport {
  double b1 = 0, b2 = 0;
  double a_emb = 0, e_emb = 0, g_emb = 0;
  long dist1 = 0, dist2 = 0;
  double cb1 = 0, cb2 = 0;
  double ca_emb = 0, ce_emb = 0, cg_emb = 0;
  long cdist1 = 0, cdist2 = 0;
  double c_coverage = 0;
  std::size_t pairs = 0;
  // Pairs whose reference content sequence is empty are skipped for the
  // c-metrics and counted here.
  std::size_t c_skipped = 0;

  // Key-value lines, 2 decimals, stable key order.
  void write(std::ostream& out) const;
};

// Sentence metrics on raw tokens, c-metrics on EVALUATION-mode content
// sequences of both sides; per-sentence metrics macro-averaged, Dist pooled.
// `table` may be null (embedding metrics report 0).
MetricReport evaluate_corpus(const std::vector<Sentence>& refs,
                             const std::vector<Sentence>& hyps,
                             const lex::FunctionLexicon& lexicon,
                             const EmbeddingTable* table);

}  // namespace ched::metrics
