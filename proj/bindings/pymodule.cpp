#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "ched/cli.hpp"
#include "ched/corpus.hpp"
#include "ched/lexicon.hpp"
#include "ched/metrics.hpp"
#include "ched/model.hpp"
#include "ched/pipeline.hpp"

namespace py = pybind11;
using namespace ched;

namespace {

lex::ExtractionMode parse_mode(const std::string& mode) {
  if (mode == "train" || mode == "training") {
    return lex::ExtractionMode::kTraining;
  }
  if (mode == "eval" || mode == "evaluation") {
    return lex::ExtractionMode::kEvaluation;
  }
  throw std::invalid_argument("mode must be 'train' or 'eval'");
}

metrics::EmbMode parse_emb_mode(const std::string& mode) {
  if (mode == "average") return metrics::EmbMode::kAverage;
  if (mode == "extrema") return metrics::EmbMode::kExtrema;
  if (mode == "greedy") return metrics::EmbMode::kGreedy;
  throw std::invalid_argument("mode must be average, extrema or greedy");
}

// Holds a loaded checkpoint plus its vocabulary for round-trip generation.
class Generator {
 public:
  Generator(const std::string& checkpoint_dir, const std::string& vocab_path) {
    std::ifstream vin(vocab_path);
    if (!vin) throw std::runtime_error("cannot open " + vocab_path);
    vocab_ = corpus::Vocabulary::load(vin);
    model_ = pipeline::load_checkpoint(checkpoint_dir, vocab_);
  }

  py::dict generate(const std::vector<std::vector<std::string>>& context,
                    int beam) const {
    if (context.empty()) throw std::invalid_argument("empty context");
    std::vector<std::vector<int>> ctx;
    for (const auto& s : context) {
      if (s.empty()) throw std::invalid_argument("empty context sentence");
      ctx.push_back(vocab_.encode_sentence(s));
    }
    pipeline::GenerateOptions opt;
    opt.beam = beam;
    auto out = pipeline::generate(*model_, ctx, opt);
    py::dict d;
    d["content"] = vocab_.decode_ids(out.content_ids);
    d["response"] = vocab_.decode_ids(out.response_ids);
    d["da"] = out.da_label > 0
                  ? py::object(py::str(models::dialog_act_name(out.da_label)))
                  : py::object(py::none());
    return d;
  }

  std::string arch() const { return models::arch_name(model_->config().arch); }

 private:
  corpus::Vocabulary vocab_;
  std::unique_ptr<pipeline::FloatModel> model_;
};

}  // namespace

PYBIND11_MODULE(_ched, m) {
  m.doc() = "content-word based dialog response generation toolkit";

  m.def("tokenize", &corpus::tokenize, py::arg("text"),
        "Rule tokenizer: lowercase, detach punctuation, split clitics.");
  m.def("segment", &corpus::segment, py::arg("turn"),
        "Split turn text into sentence chunks at terminal punctuation.");
  m.def("lemmatize", &lex::lemmatize, py::arg("word"));

  py::class_<corpus::Vocabulary>(m, "Vocabulary")
      .def_static("load",
                  [](const std::string& path) {
                    std::ifstream in(path);
                    if (!in) throw std::runtime_error("cannot open " + path);
                    return corpus::Vocabulary::load(in);
                  },
                  py::arg("path"))
      .def("encode", &corpus::Vocabulary::encode)
      .def("decode", &corpus::Vocabulary::decode)
      .def("encode_sentence", &corpus::Vocabulary::encode_sentence)
      .def("__contains__", &corpus::Vocabulary::contains)
      .def("__len__", &corpus::Vocabulary::size)
      .def("hash", &corpus::Vocabulary::hash);

  py::class_<lex::FunctionLexicon>(m, "FunctionLexicon")
      .def_static(
          "load",
          [](const std::string& path, const corpus::Vocabulary* vocab) {
            std::ifstream in(path);
            if (!in) throw std::runtime_error("cannot open " + path);
            return lex::FunctionLexicon::load(in, vocab);
          },
          py::arg("path"), py::arg("vocab") = nullptr)
      .def("__contains__", &lex::FunctionLexicon::contains)
      .def("__len__", &lex::FunctionLexicon::size)
      .def("is_function_word",
           [](const lex::FunctionLexicon& l, const std::string& w,
              const std::string& mode) {
             return l.is_function_word(w, parse_mode(mode));
           },
           py::arg("word"), py::arg("mode") = "eval");

  m.def(
      "extract_content_sequence",
      [](const std::vector<std::string>& sentence,
         const lex::FunctionLexicon& lexicon, const std::string& mode) {
        return lex::extract_content_sequence(sentence, lexicon,
                                             parse_mode(mode))
            .lemmas;
      },
      py::arg("sentence"), py::arg("lexicon"), py::arg("mode") = "eval");

  m.def(
      "inject_noise",
      [](const std::vector<std::string>& content, std::uint64_t seed,
         const std::vector<std::string>& pool) {
        Rng rng(seed);
        return lex::inject_noise_seq(content, rng, pool);
      },
      py::arg("content"), py::arg("seed"), py::arg("pool"));

  m.def("build_insert_pool",
        [](const corpus::Vocabulary& vocab, const lex::FunctionLexicon& lex_,
           const std::string& mode) {
          return lex::build_insert_pool(vocab, lex_, parse_mode(mode));
        },
        py::arg("vocab"), py::arg("lexicon"), py::arg("mode") = "train");

  py::class_<metrics::EmbeddingTable>(m, "EmbeddingTable")
      .def_static("load",
                  [](const std::string& path) {
                    std::ifstream in(path);
                    if (!in) throw std::runtime_error("cannot open " + path);
                    return metrics::EmbeddingTable::load(in);
                  },
                  py::arg("path"))
      .def("__len__", &metrics::EmbeddingTable::size)
      .def("dimension", &metrics::EmbeddingTable::dimension);

  m.def("sentence_bleu", &metrics::sentence_bleu, py::arg("ref"),
        py::arg("hyp"), py::arg("n"));
  m.def(
      "embedding_similarity",
      [](const corpus::Sentence& ref, const corpus::Sentence& hyp,
         const metrics::EmbeddingTable& table, const std::string& mode) {
        return metrics::embedding_similarity(ref, hyp, table,
                                             parse_emb_mode(mode));
      },
      py::arg("ref"), py::arg("hyp"), py::arg("table"), py::arg("mode"));
  m.def("distinct_ngrams", &metrics::distinct_ngrams, py::arg("hyps"),
        py::arg("n"));
  m.def(
      "content_coverage",
      [](const std::vector<std::string>& c_ref,
         const std::vector<std::string>& c_hyp) {
        lex::ContentSequence a, b;
        a.lemmas = c_ref;
        b.lemmas = c_hyp;
        return metrics::content_coverage(a, b);
      },
      py::arg("c_ref"), py::arg("c_hyp"));
  m.def(
      "evaluate_corpus",
      [](const std::vector<corpus::Sentence>& refs,
         const std::vector<corpus::Sentence>& hyps,
         const lex::FunctionLexicon& lexicon,
         const metrics::EmbeddingTable* table) {
        auto r = metrics::evaluate_corpus(refs, hyps, lexicon, table);
        py::dict d;
        d["B1"] = r.b1;
        d["B2"] = r.b2;
        d["A-emb"] = r.a_emb;
        d["E-emb"] = r.e_emb;
        d["G-emb"] = r.g_emb;
        d["Dist-1"] = r.dist1;
        d["Dist-2"] = r.dist2;
        d["cB1"] = r.cb1;
        d["cB2"] = r.cb2;
        d["cA-emb"] = r.ca_emb;
        d["cE-emb"] = r.ce_emb;
        d["cG-emb"] = r.cg_emb;
        d["cDist-1"] = r.cdist1;
        d["cDist-2"] = r.cdist2;
        d["cCoverage"] = r.c_coverage;
        d["cCoverage-skipped"] = r.c_skipped;
        return d;
      },
      py::arg("refs"), py::arg("hyps"), py::arg("lexicon"),
      py::arg("table") = nullptr);

  py::class_<Generator>(m, "Generator")
      .def(py::init<const std::string&, const std::string&>(),
           py::arg("checkpoint"), py::arg("vocab"))
      .def("generate", &Generator::generate, py::arg("context"),
           py::arg("beam") = 1)
      .def_property_readonly("arch", &Generator::arch);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    return cli::run(args);
  });
}
