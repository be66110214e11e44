#include "ched/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ched::metrics {

EmbeddingTable EmbeddingTable::load(std::istream& in, const Vocabulary* vocab,
                                    std::size_t* skipped) {
  EmbeddingTable t;
  std::string line;
  std::size_t skip_count = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<float> vec;
    std::string field;
    bool ok = true;
    while (ss >> field) {
      char* end = nullptr;
      double x = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0' || !std::isfinite(x)) {
        ok = false;
        break;
      }
      vec.push_back(static_cast<float>(x));
    }
    if (!ok || vec.empty()) {
      ++skip_count;
      continue;
    }
    if (t.dim_ == 0) {
      t.dim_ = static_cast<int>(vec.size());
    } else if (static_cast<int>(vec.size()) != t.dim_) {
      throw std::runtime_error("embedding file: inconsistent dimension at `" +
                               token + "` (" + std::to_string(vec.size()) +
                               " vs " + std::to_string(t.dim_) + ")");
    }
    if (vocab && !vocab->contains(token)) continue;
    t.table_[token] = std::move(vec);
  }
  if (skipped) *skipped = skip_count;
  return t;
}

void EmbeddingTable::insert(const std::string& token, std::vector<float> vec) {
  if (dim_ == 0) dim_ = static_cast<int>(vec.size());
  if (static_cast<int>(vec.size()) != dim_) {
    throw std::runtime_error("embedding insert: inconsistent dimension");
  }
  table_[token] = std::move(vec);
}

const std::vector<float>* EmbeddingTable::find(const std::string& token) const {
  auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const Sentence& s,
                                                      int n) {
  std::map<std::vector<std::string>, long> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  }
  return counts;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<double>> gather_vectors(const Sentence& s,
                                                const EmbeddingTable& table) {
  std::vector<std::vector<double>> out;
  for (const auto& tok : s) {
    const auto* v = table.find(tok);
    if (!v) continue;
    out.emplace_back(v->begin(), v->end());
  }
  return out;
}

std::vector<double> mean_vector(const std::vector<std::vector<double>>& vs) {
  std::vector<double> m(vs.front().size(), 0.0);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  }
  for (auto& x : m) x /= static_cast<double>(vs.size());
  return m;
}

std::vector<double> extrema_vector(
    const std::vector<std::vector<double>>& vs) {
  std::vector<double> m(vs.front().size(), 0.0);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (std::abs(v[i]) > std::abs(m[i])) m[i] = v[i];
    }
  }
  return m;
}

double greedy_direction(const std::vector<std::vector<double>>& from,
                        const std::vector<std::vector<double>>& to) {
  double sum = 0;
  for (const auto& f : from) {
    double best = -1.0;
    for (const auto& t : to) best = std::max(best, cosine(f, t));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double sentence_bleu(const Sentence& ref, const Sentence& hyp, int n) {
  if (ref.empty()) {
    throw std::invalid_argument("sentence_bleu: empty reference");
  }
  if (n < 1) throw std::invalid_argument("sentence_bleu: order must be >= 1");
  if (hyp.empty()) return 0.0;

  auto ref_counts = ngram_counts(ref, n);
  auto hyp_counts = ngram_counts(hyp, n);
  long total = 0, clipped = 0;
  for (const auto& [gram, count] : hyp_counts) {
    total += count;
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) clipped += std::min(count, it->second);
  }
  if (total == 0) return 0.0;

  double precision = static_cast<double>(clipped) / static_cast<double>(total);
  double bp = std::min(
      1.0, std::exp(1.0 - static_cast<double>(ref.size()) /
                              static_cast<double>(hyp.size())));
  return 100.0 * precision * bp;
}

double embedding_similarity(const Sentence& ref, const Sentence& hyp,
                            const EmbeddingTable& table, EmbMode mode,
                            bool* embeddable) {
  auto rv = gather_vectors(ref, table);
  auto hv = gather_vectors(hyp, table);
  if (embeddable) *embeddable = !rv.empty() && !hv.empty();
  if (rv.empty() || hv.empty()) return 0.0;
  switch (mode) {
    case EmbMode::kAverage:
      return 100.0 * cosine(mean_vector(rv), mean_vector(hv));
    case EmbMode::kExtrema:
      return 100.0 * cosine(extrema_vector(rv), extrema_vector(hv));
    default:
      return 100.0 *
             0.5 * (greedy_direction(rv, hv) + greedy_direction(hv, rv));
  }
}

long distinct_ngrams(const std::vector<Sentence>& corpus_hyps, int n) {
  std::set<std::vector<std::string>> types;
  for (const auto& hyp : corpus_hyps) {
    if (static_cast<int>(hyp.size()) < n) continue;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      types.insert(
          std::vector<std::string>(hyp.begin() + i, hyp.begin() + i + n));
    }
  }
  return static_cast<long>(types.size());
}

double content_coverage(const lex::ContentSequence& c_ref,
                        const lex::ContentSequence& c_hyp) {
  if (c_ref.empty()) {
    throw std::invalid_argument(
        "content_coverage: empty reference content sequence");
  }
  std::unordered_set<std::string> ref_types(c_ref.lemmas.begin(),
                                            c_ref.lemmas.end());
  std::unordered_set<std::string> hyp_types(c_hyp.lemmas.begin(),
                                            c_hyp.lemmas.end());
  long covered = 0;
  for (const auto& t : ref_types) covered += hyp_types.count(t) > 0 ? 1 : 0;
  return 100.0 * static_cast<double>(covered) /
         static_cast<double>(ref_types.size());
}

void MetricReport::write(std::ostream& out) const {
  auto pct = [&out](const char* key, double value) {
    out << key << ' ' << std::fixed << std::setprecision(2) << value << '\n';
  };
  pct("B1", b1);
  pct("B2", b2);
  pct("A-emb", a_emb);
  pct("E-emb", e_emb);
  pct("G-emb", g_emb);
  out << "Dist-1 " << dist1 << '\n';
  out << "Dist-2 " << dist2 << '\n';
  pct("cB1", cb1);
  pct("cB2", cb2);
  pct("cA-emb", ca_emb);
  pct("cE-emb", ce_emb);
  pct("cG-emb", cg_emb);
  out << "cDist-1 " << cdist1 << '\n';
  out << "cDist-2 " << cdist2 << '\n';
  pct("cCoverage", c_coverage);
  out << "cCoverage-skipped " << c_skipped << '\n';
}

MetricReport evaluate_corpus(const std::vector<Sentence>& refs,
                             const std::vector<Sentence>& hyps,
                             const lex::FunctionLexicon& lexicon,
                             const EmbeddingTable* table) {
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("evaluate_corpus: refs/hyps length mismatch");
  }
  if (refs.empty()) {
    throw std::invalid_argument("evaluate_corpus: empty input");
  }

  MetricReport r;
  r.pairs = refs.size();

  std::vector<Sentence> c_hyps_tokens;
  double cb1 = 0, cb2 = 0, ca = 0, ce = 0, cg = 0, cov = 0;
  std::size_t c_pairs = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    r.b1 += sentence_bleu(refs[i], hyps[i], 1);
    r.b2 += sentence_bleu(refs[i], hyps[i], 2);
    if (table) {
      r.a_emb += embedding_similarity(refs[i], hyps[i], *table,
                                      EmbMode::kAverage);
      r.e_emb += embedding_similarity(refs[i], hyps[i], *table,
                                      EmbMode::kExtrema);
      r.g_emb += embedding_similarity(refs[i], hyps[i], *table,
                                      EmbMode::kGreedy);
    }

    auto c_ref = lex::extract_content_sequence(refs[i], lexicon,
                                               lex::ExtractionMode::kEvaluation);
    auto c_hyp = lex::extract_content_sequence(hyps[i], lexicon,
                                               lex::ExtractionMode::kEvaluation);
    c_hyps_tokens.push_back(c_hyp.lemmas);
    if (c_ref.empty()) {
      ++r.c_skipped;
      continue;
    }
    ++c_pairs;
    cb1 += sentence_bleu(c_ref.lemmas, c_hyp.lemmas, 1);
    cb2 += sentence_bleu(c_ref.lemmas, c_hyp.lemmas, 2);
    if (table) {
      ca += embedding_similarity(c_ref.lemmas, c_hyp.lemmas, *table,
                                 EmbMode::kAverage);
      ce += embedding_similarity(c_ref.lemmas, c_hyp.lemmas, *table,
                                 EmbMode::kExtrema);
      cg += embedding_similarity(c_ref.lemmas, c_hyp.lemmas, *table,
                                 EmbMode::kGreedy);
    }
    cov += content_coverage(c_ref, c_hyp);
  }

  const double n = static_cast<double>(refs.size());
  r.b1 /= n;
  r.b2 /= n;
  r.a_emb /= n;
  r.e_emb /= n;
  r.g_emb /= n;
  r.dist1 = distinct_ngrams(hyps, 1);
  r.dist2 = distinct_ngrams(hyps, 2);
  if (c_pairs > 0) {
    const double m = static_cast<double>(c_pairs);
    r.cb1 = cb1 / m;
    r.cb2 = cb2 / m;
    r.ca_emb = ca / m;
    r.ce_emb = ce / m;
    r.cg_emb = cg / m;
    r.c_coverage = cov / m;
  }
  r.cdist1 = distinct_ngrams(c_hyps_tokens, 1);
  r.cdist2 = distinct_ngrams(c_hyps_tokens, 2);
  return r;
}

}  // namespace ched::metrics
