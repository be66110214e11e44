#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ched/corpus.hpp"
#include "ched/metrics.hpp"
#include "ched/nn/layers.hpp"
#include "ched/nn/params.hpp"

namespace ched::models {

using corpus::Vocabulary;

enum class Arch { kHedPlain, kHedAttn, kHedCd, kHedCed };

std::string arch_name(Arch a);
std::optional<Arch> arch_from_name(const std::string& name);

inline bool has_content_path(Arch a) {
  return a == Arch::kHedCd || a == Arch::kHedCed;
}

struct ModelConfig {
  int vocab_size = 0;
  int emb_size = 200;
  int enc_hidden = 300;  // per direction
  int dec_hidden = 200;
  int attn_size = 0;  // 0: follow dec_hidden
  int window = 5;
  int max_sent_len = 40;
  int max_content_len = 20;
  Arch arch = Arch::kHedCed;
  bool da_head = false;
  double da_weight = 0.1;

  int attention_size() const { return attn_size > 0 ? attn_size : dec_hidden; }
  int sent_key_size() const { return 2 * enc_hidden; }
  // Sentence-decoder attention keys: encoder states for HED, content-decoder
  // states for +cD, content-encoder states for +cED.
  int sent_attn_key_size() const {
    return arch == Arch::kHedCd ? dec_hidden : 2 * enc_hidden;
  }
  int bridge_input_size() const {
    switch (arch) {
      case Arch::kHedCd: return enc_hidden + dec_hidden;
      case Arch::kHedCed: return enc_hidden + 2 * enc_hidden;
      default: return enc_hidden;
    }
  }
  void validate() const;
};

constexpr int kNumDialogActs = 4;
// DailyDialog act ids are 1-based.
const char* dialog_act_name(int label);

template <class S>
struct ModelParts {
  nn::TensorPtr<S> emb;
  nn::BiGruParams<S> enc_sent;
  nn::GruParams<S> enc_dial;

  nn::MlpParams<S> mlp_cont;
  nn::GruParams<S> dec_cont;
  nn::AttentionParams<S> attn_cont;
  nn::TensorPtr<S> dec_cont_P;
  nn::TensorPtr<S> b_out_cont;
  nn::BiGruParams<S> enc_cont;

  nn::MlpParams<S> mlp_sent;
  nn::GruParams<S> dec_sent;
  nn::AttentionParams<S> attn_sent;
  nn::TensorPtr<S> dec_sent_P;
  nn::TensorPtr<S> b_out_sent;

  nn::MlpParams<S> da;
};

// Owns the ParamSet for one architecture. Parameter creation order is fixed
// so a seed fully determines the initialization.
template <class S>
class Model {
 public:
  Model(ModelConfig cfg, Rng& rng,
        const metrics::EmbeddingTable* pretrained = nullptr,
        const Vocabulary* vocab = nullptr);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet<S>& params() { return params_; }
  const nn::ParamSet<S>& params() const { return params_; }
  const ModelParts<S>& parts() const { return parts_; }

 private:
  ModelConfig cfg_;
  nn::ParamSet<S> params_;
  ModelParts<S> parts_;
};

template <class S>
struct EncodedDialog {
  // Token-level states per context sentence (2*enc_hidden each).
  std::vector<std::vector<nn::TensorPtr<S>>> sent_states;
  std::vector<nn::TensorPtr<S>> sent_finals;  // z_sent,i
  nn::TensorPtr<S> dial_final;                // z_dial

  std::vector<nn::TensorPtr<S>> flat_states() const {
    std::vector<nn::TensorPtr<S>> out;
    for (const auto& s : sent_states) out.insert(out.end(), s.begin(), s.end());
    return out;
  }
};

template <class S>
struct ForwardResult {
  nn::TensorPtr<S> loss;
  nn::TensorPtr<S> sentence_loss;
  nn::TensorPtr<S> content_loss;  // null for plain HED
  nn::TensorPtr<S> da_loss;       // null without the DA head
  std::vector<nn::TensorPtr<S>> sentence_logits;
  std::vector<nn::TensorPtr<S>> content_logits;
  nn::TensorPtr<S> da_probs;
  std::size_t sentence_positions = 0;
  std::size_t content_positions = 0;
};

// ---- implementation ----------------------------------------------------

inline void ModelConfig::validate() const {
  auto positive = [](int x, const char* what) {
    if (x <= 0) {
      throw std::invalid_argument(std::string("model config: ") + what +
                                  " must be positive");
    }
  };
  positive(vocab_size, "vocab_size");
  positive(emb_size, "emb_size");
  positive(enc_hidden, "enc_hidden");
  positive(dec_hidden, "dec_hidden");
  positive(window, "window");
  positive(max_sent_len, "max_sent_len");
  positive(max_content_len, "max_content_len");
  if (dec_hidden != emb_size) {
    throw std::invalid_argument(
        "model config: weight tying requires dec_hidden == emb_size");
  }
}

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::kHedPlain: return "hed-plain";
    case Arch::kHedAttn: return "hed-attn";
    case Arch::kHedCd: return "hed-cd";
    default: return "hed-ced";
  }
}

inline std::optional<Arch> arch_from_name(const std::string& name) {
  if (name == "hed-plain") return Arch::kHedPlain;
  if (name == "hed-attn" || name == "hed") return Arch::kHedAttn;
  if (name == "hed-cd") return Arch::kHedCd;
  if (name == "hed-ced") return Arch::kHedCed;
  return std::nullopt;
}

inline const char* dialog_act_name(int label) {
  switch (label) {
    case 1: return "inform";
    case 2: return "question";
    case 3: return "directive";
    case 4: return "commissive";
    default: return "unknown";
  }
}

namespace detail {

template <class S>
nn::GruParams<S> create_gru(nn::ParamSet<S>& ps, const std::string& prefix,
                            int in, int hidden, Rng& rng) {
  nn::GruParams<S> p;
  p.Wz = ps.create(prefix + ".Wz", {hidden, in}, rng);
  p.Uz = ps.create(prefix + ".Uz", {hidden, hidden}, rng);
  p.bz = ps.create(prefix + ".bz", {hidden}, rng);
  p.Wr = ps.create(prefix + ".Wr", {hidden, in}, rng);
  p.Ur = ps.create(prefix + ".Ur", {hidden, hidden}, rng);
  p.br = ps.create(prefix + ".br", {hidden}, rng);
  p.Wh = ps.create(prefix + ".Wh", {hidden, in}, rng);
  p.Uh = ps.create(prefix + ".Uh", {hidden, hidden}, rng);
  p.bh = ps.create(prefix + ".bh", {hidden}, rng);
  return p;
}

template <class S>
nn::MlpParams<S> create_mlp(nn::ParamSet<S>& ps, const std::string& prefix,
                            int in, int hidden, int out, Rng& rng) {
  nn::MlpParams<S> p;
  p.W1 = ps.create(prefix + ".W1", {hidden, in}, rng);
  p.b1 = ps.create(prefix + ".b1", {hidden}, rng);
  p.W2 = ps.create(prefix + ".W2", {out, hidden}, rng);
  p.b2 = ps.create(prefix + ".b2", {out}, rng);
  return p;
}

template <class S>
nn::AttentionParams<S> create_attention(nn::ParamSet<S>& ps,
                                        const std::string& prefix, int query,
                                        int key, int attn, Rng& rng) {
  nn::AttentionParams<S> p;
  p.Wq = ps.create(prefix + ".Wq", {attn, query}, rng);
  p.Wk = ps.create(prefix + ".Wk", {attn, key}, rng);
  p.v = ps.create(prefix + ".v", {attn}, rng);
  return p;
}

}  // namespace detail

template <class S>
Model<S>::Model(ModelConfig cfg, Rng& rng,
                const metrics::EmbeddingTable* pretrained,
                const Vocabulary* vocab)
    : cfg_(cfg) {
  cfg_.validate();
  const int E = cfg_.emb_size;
  const int He = cfg_.enc_hidden;
  const int Hd = cfg_.dec_hidden;
  const int A = cfg_.attention_size();
  const int V = cfg_.vocab_size;

  // Embeddings stand in for pretrained vectors, whose coordinates are O(1);
  // the +-0.08 range of the other weights would starve the encoders of
  // input signal at small sizes.
  parts_.emb = params_.create("emb", {V, E}, rng, -1.0, 1.0);
  if (pretrained && vocab) {
    for (int id = 0; id < V && id < vocab->size(); ++id) {
      const auto* vec = pretrained->find(vocab->decode(id));
      if (!vec) continue;
      for (int j = 0; j < E && j < static_cast<int>(vec->size()); ++j) {
        parts_.emb->at(id, j) = static_cast<S>((*vec)[j]);
      }
    }
  }

  parts_.enc_sent.fwd = detail::create_gru(params_, "enc_sent.fwd", E, He, rng);
  parts_.enc_sent.bwd = detail::create_gru(params_, "enc_sent.bwd", E, He, rng);
  parts_.enc_dial = detail::create_gru(params_, "enc_dial", 2 * He, He, rng);

  if (has_content_path(cfg_.arch)) {
    parts_.mlp_cont = detail::create_mlp(params_, "mlp_cont", He, Hd, Hd, rng);
    parts_.dec_cont = detail::create_gru(params_, "dec_cont", E, Hd, rng);
    parts_.attn_cont = detail::create_attention(params_, "attn_cont", Hd,
                                                2 * He, A, rng);
    parts_.dec_cont_P = params_.create("dec_cont.P", {E, 2 * He}, rng);
    parts_.b_out_cont = params_.create("dec_cont.b_out", {V}, rng);
    if (cfg_.arch == Arch::kHedCed) {
      parts_.enc_cont.fwd =
          detail::create_gru(params_, "enc_cont.fwd", E, He, rng);
      parts_.enc_cont.bwd =
          detail::create_gru(params_, "enc_cont.bwd", E, He, rng);
    }
  }

  parts_.mlp_sent = detail::create_mlp(params_, "mlp_sent",
                                       cfg_.bridge_input_size(), Hd, Hd, rng);
  parts_.dec_sent = detail::create_gru(params_, "dec_sent", E, Hd, rng);
  if (cfg_.arch != Arch::kHedPlain) {
    const int K = cfg_.sent_attn_key_size();
    parts_.attn_sent =
        detail::create_attention(params_, "attn_sent", Hd, K, A, rng);
    parts_.dec_sent_P = params_.create("dec_sent.P", {E, K}, rng);
  }
  parts_.b_out_sent = params_.create("dec_sent.b_out", {V}, rng);

  if (cfg_.da_head) {
    parts_.da = detail::create_mlp(params_, "da", Hd, Hd, kNumDialogActs, rng);
  }
}

template <class S>
EncodedDialog<S> encode_context(nn::Tape<S>& tape, const Model<S>& model,
                                const std::vector<std::vector<int>>& context) {
  if (context.empty()) {
    throw std::runtime_error("encode_context: empty context");
  }
  const auto& parts = model.parts();
  EncodedDialog<S> enc;
  for (const auto& sent : context) {
    if (sent.empty()) {
      throw std::runtime_error("encode_context: empty sentence in context");
    }
    std::vector<nn::TensorPtr<S>> xs;
    xs.reserve(sent.size());
    for (int id : sent) xs.push_back(nn::row(tape, parts.emb, id));
    auto r = nn::encode_sequence(tape, xs, parts.enc_sent);
    enc.sent_states.push_back(std::move(r.states));
    enc.sent_finals.push_back(r.final);
  }
  auto dial = nn::encode_sequence(tape, enc.sent_finals, parts.enc_dial);
  enc.dial_final = dial.final;
  return enc;
}

namespace detail {

template <class S>
struct DecoderRefs {
  const nn::GruParams<S>* gru = nullptr;
  const nn::AttentionParams<S>* attn = nullptr;  // null: no attention
  nn::TensorPtr<S> P;                            // attention input projection
  nn::TensorPtr<S> emb;                          // tied output projection
  nn::TensorPtr<S> b_out;
};

template <class S>
DecoderRefs<S> sentence_decoder_refs(const Model<S>& m, bool attn) {
  const auto& p = m.parts();
  DecoderRefs<S> r;
  r.gru = &p.dec_sent;
  if (attn && m.config().arch != Arch::kHedPlain) {
    r.attn = &p.attn_sent;
    r.P = p.dec_sent_P;
  }
  r.emb = p.emb;
  r.b_out = p.b_out_sent;
  return r;
}

template <class S>
DecoderRefs<S> content_decoder_refs(const Model<S>& m) {
  const auto& p = m.parts();
  DecoderRefs<S> r;
  r.gru = &p.dec_cont;
  r.attn = &p.attn_cont;
  r.P = p.dec_cont_P;
  r.emb = p.emb;
  r.b_out = p.b_out_cont;
  return r;
}

// One decoder step: embed the previous token, mix in the attention context
// through P, advance the GRU, project with the tied embedding.
template <class S>
struct StepResult {
  nn::TensorPtr<S> h;
  nn::TensorPtr<S> logits;
};

template <class S>
StepResult<S> decoder_step(nn::Tape<S>& tape, const DecoderRefs<S>& d,
                           const nn::AttendedKeys<S>* keys, int prev_id,
                           const nn::TensorPtr<S>& h_prev) {
  auto x = nn::row(tape, d.emb, prev_id);
  if (d.attn && keys) {
    auto att = nn::attend(tape, *d.attn, *keys, h_prev);
    x = nn::add(tape, x, nn::matvec(tape, d.P, att.context));
  }
  StepResult<S> out;
  out.h = nn::gru_step(tape, x, h_prev, *d.gru);
  out.logits = nn::affine(tape, d.emb, out.h, d.b_out);
  return out;
}

template <class S>
struct TeacherForced {
  std::vector<nn::TensorPtr<S>> logits;
  std::vector<nn::TensorPtr<S>> states;  // state after consuming each input
  std::vector<int> targets;
};

// Inputs are [SOS, t_1..t_n], targets [t_1..t_n, EOS]; states align so that
// states[i] consumed input i (states[0] is the post-SOS state).
template <class S>
TeacherForced<S> teacher_forced(nn::Tape<S>& tape, const DecoderRefs<S>& d,
                                const nn::AttendedKeys<S>* keys,
                                const nn::TensorPtr<S>& h0,
                                const std::vector<int>& tokens,
                                bool append_eos) {
  TeacherForced<S> out;
  out.targets = tokens;
  if (append_eos) out.targets.push_back(Vocabulary::kEos);
  nn::TensorPtr<S> h = h0;
  int prev = Vocabulary::kSos;
  for (int target : out.targets) {
    auto step = decoder_step(tape, d, keys, prev, h);
    h = step.h;
    out.states.push_back(step.h);
    out.logits.push_back(step.logits);
    prev = target;
  }
  return out;
}

// Content-decoder states exposed onward: the states that produced
// c_1..c_L (the trailing state only produced EOS). An empty sequence
// degenerates to the single post-SOS state.
template <class S>
std::vector<nn::TensorPtr<S>> content_keys(
    const std::vector<nn::TensorPtr<S>>& states, std::size_t content_len) {
  if (content_len == 0) return {states.front()};
  return std::vector<nn::TensorPtr<S>>(states.begin(),
                                       states.begin() + content_len);
}

}  // namespace detail

// Softmax over a 4-way MLP readout of the sentence decoder's initial state.
template <class S>
nn::TensorPtr<S> predict_dialog_act(nn::Tape<S>& tape, const Model<S>& model,
                                    const nn::TensorPtr<S>& h0_sent) {
  if (!model.config().da_head) {
    throw std::runtime_error("predict_dialog_act: DA head not enabled");
  }
  const auto& p = model.parts().da;
  auto hidden = nn::tanh_op(tape, nn::affine(tape, p.W1, h0_sent, p.b1));
  auto logits = nn::affine(tape, p.W2, hidden, p.b2);
  return nn::softmax_vec(tape, logits);
}

namespace detail {

// DA loss from the predicted distribution; label is 1-based.
template <class S>
nn::TensorPtr<S> dialog_act_loss(nn::Tape<S>& tape, const Model<S>& model,
                                 const nn::TensorPtr<S>& h0_sent, int label) {
  const auto& p = model.parts().da;
  auto hidden = nn::tanh_op(tape, nn::affine(tape, p.W1, h0_sent, p.b1));
  auto logits = nn::affine(tape, p.W2, hidden, p.b2);
  return nn::cross_entropy(tape, logits, label - 1);
}

template <class S>
void attach_da(nn::Tape<S>& tape, const Model<S>& model,
               const nn::TensorPtr<S>& h0_sent, int da_label,
               ForwardResult<S>& r) {
  if (!model.config().da_head || da_label <= 0) return;
  if (da_label > kNumDialogActs) {
    throw std::invalid_argument("dialog act label out of range");
  }
  r.da_loss = dialog_act_loss(tape, model, h0_sent, da_label);
  r.loss = nn::add(tape, r.loss,
                   nn::scale(tape, r.da_loss,
                             static_cast<S>(model.config().da_weight)));
}

}  // namespace detail

// Plain / attentional HED: encode the context, bridge z_dial into the
// sentence decoder, teacher-force the response.
template <class S>
ForwardResult<S> hed_forward(nn::Tape<S>& tape, const Model<S>& model,
                             const std::vector<std::vector<int>>& context,
                             const std::vector<int>& response, bool attn,
                             int da_label = 0) {
  const auto& cfg = model.config();
  if (static_cast<int>(response.size()) > cfg.max_sent_len + 2) {
    throw std::runtime_error("hed_forward: response exceeds maximum length");
  }
  auto enc = encode_context(tape, model, context);
  auto h0 = nn::mlp_bridge(tape, model.parts().mlp_sent, enc.dial_final);

  auto refs = detail::sentence_decoder_refs(model, attn);
  std::optional<nn::AttendedKeys<S>> keys;
  if (refs.attn) {
    keys = nn::project_keys(tape, *refs.attn, enc.flat_states());
  }
  auto tf = detail::teacher_forced(tape, refs, keys ? &*keys : nullptr, h0,
                                   response, true);

  ForwardResult<S> r;
  r.sentence_logits = tf.logits;
  r.sentence_positions = tf.targets.size();
  r.sentence_loss =
      nn::cross_entropy_loss(tape, tf.logits, tf.targets, Vocabulary::kPad);
  r.loss = r.sentence_loss;
  detail::attach_da(tape, model, h0, da_label, r);
  return r;
}

namespace detail {

// Shared trunk of the +cD / +cED forwards: context encoding plus the
// teacher-forced content decoder attending to encoder states.
template <class S>
struct ContentTrunk {
  EncodedDialog<S> enc;
  TeacherForced<S> tf_cont;
  std::vector<nn::TensorPtr<S>> cont_states;
};

template <class S>
ContentTrunk<S> run_content_trunk(nn::Tape<S>& tape, const Model<S>& model,
                                  const std::vector<std::vector<int>>& context,
                                  std::vector<int> content) {
  ContentTrunk<S> t;
  t.enc = encode_context(tape, model, context);
  auto h0_cont = nn::mlp_bridge(tape, model.parts().mlp_cont, t.enc.dial_final);
  auto refs = content_decoder_refs(model);
  auto keys = nn::project_keys(tape, *refs.attn, t.enc.flat_states());
  // An empty content sequence degenerates to the single target [EOS].
  const std::size_t content_len = content.size();
  t.tf_cont = teacher_forced(tape, refs, &keys, h0_cont, content, true);
  t.cont_states = content_keys(t.tf_cont.states, content_len);
  return t;
}

template <class S>
ForwardResult<S> finish_content_forward(
    nn::Tape<S>& tape, const Model<S>& model, ContentTrunk<S>& trunk,
    const std::vector<nn::TensorPtr<S>>& sent_keys_src,
    const nn::TensorPtr<S>& z_cont, const std::vector<int>& response,
    int da_label) {
  const auto& cfg = model.config();
  if (static_cast<int>(response.size()) > cfg.max_sent_len + 2) {
    throw std::runtime_error("forward: response exceeds maximum length");
  }
  auto bridge_in = nn::concat(tape, trunk.enc.dial_final, z_cont);
  auto h0_sent = nn::mlp_bridge(tape, model.parts().mlp_sent, bridge_in);

  auto refs = sentence_decoder_refs(model, true);
  auto keys = nn::project_keys(tape, *refs.attn, sent_keys_src);
  auto tf_sent =
      teacher_forced(tape, refs, &keys, h0_sent, response, true);

  ForwardResult<S> r;
  r.content_logits = trunk.tf_cont.logits;
  r.content_positions = trunk.tf_cont.targets.size();
  r.content_loss = nn::cross_entropy_loss(tape, trunk.tf_cont.logits,
                                          trunk.tf_cont.targets,
                                          Vocabulary::kPad);
  r.sentence_logits = tf_sent.logits;
  r.sentence_positions = tf_sent.targets.size();
  r.sentence_loss = nn::cross_entropy_loss(tape, tf_sent.logits,
                                           tf_sent.targets, Vocabulary::kPad);
  r.loss = nn::add(tape, r.content_loss, r.sentence_loss);
  attach_da(tape, model, h0_sent, da_label, r);
  return r;
}

}  // namespace detail

// HED+cD: the sentence decoder attends to the content decoder's hidden
// states; z_cont is the content decoder's last state.
template <class S>
ForwardResult<S> hed_cd_forward(nn::Tape<S>& tape, const Model<S>& model,
                                const std::vector<std::vector<int>>& context,
                                const std::vector<int>& content,
                                const std::vector<int>& response,
                                int da_label = 0) {
  auto trunk = detail::run_content_trunk(tape, model, context, content);
  auto z_cont = trunk.cont_states.back();
  return detail::finish_content_forward(tape, model, trunk, trunk.cont_states,
                                        z_cont, response, da_label);
}

// HED+cED: an extra bidirectional encoder re-reads the content tokens; the
// sentence decoder attends to its states and z_cont is its final state.
template <class S>
ForwardResult<S> hed_ced_forward(nn::Tape<S>& tape, const Model<S>& model,
                                 const std::vector<std::vector<int>>& context,
                                 const std::vector<int>& content,
                                 const std::vector<int>& response,
                                 int da_label = 0) {
  auto trunk = detail::run_content_trunk(tape, model, context, content);

  std::vector<int> enc_tokens = content;
  if (enc_tokens.empty()) enc_tokens.push_back(Vocabulary::kEos);
  std::vector<nn::TensorPtr<S>> xs;
  xs.reserve(enc_tokens.size());
  for (int id : enc_tokens) {
    xs.push_back(nn::row(tape, model.parts().emb, id));
  }
  auto enc_cont = nn::encode_sequence(tape, xs, model.parts().enc_cont);

  return detail::finish_content_forward(tape, model, trunk, enc_cont.states,
                                        enc_cont.final, response, da_label);
}

// Dispatch on the configured architecture.
template <class S>
ForwardResult<S> forward(nn::Tape<S>& tape, const Model<S>& model,
                         const std::vector<std::vector<int>>& context,
                         const std::vector<int>& content,
                         const std::vector<int>& response, int da_label = 0) {
  switch (model.config().arch) {
    case Arch::kHedPlain:
      return hed_forward(tape, model, context, response, false, da_label);
    case Arch::kHedAttn:
      return hed_forward(tape, model, context, response, true, da_label);
    case Arch::kHedCd:
      return hed_cd_forward(tape, model, context, content, response, da_label);
    default:
      return hed_ced_forward(tape, model, context, content, response,
                             da_label);
  }
}

template <class S>
struct DecodeResult {
  std::vector<int> ids;  // emitted tokens; EOS is not included
  // One state per step taken: states[t] produced ids[t] (or the final EOS).
  std::vector<nn::TensorPtr<S>> states;
};

// Greedy argmax decode from SOS. Ties break to the lowest id; PAD and SOS
// are never emitted. Stops at EOS or after max_len emitted tokens.
template <class S>
DecodeResult<S> decode_greedy(nn::Tape<S>& tape,
                              const detail::DecoderRefs<S>& d,
                              const nn::AttendedKeys<S>* keys,
                              const nn::TensorPtr<S>& h0, int max_len) {
  if (max_len < 1) throw std::invalid_argument("decode_greedy: max_len < 1");
  DecodeResult<S> out;
  nn::TensorPtr<S> h = h0;
  int prev = Vocabulary::kSos;
  while (static_cast<int>(out.ids.size()) < max_len) {
    auto step = detail::decoder_step(tape, d, keys, prev, h);
    out.states.push_back(step.h);
    int best = -1;
    S best_v = 0;
    for (int i = 0; i < step.logits->rows(); ++i) {
      if (i == Vocabulary::kPad || i == Vocabulary::kSos) continue;
      if (best < 0 || step.logits->v[i] > best_v) {
        best = i;
        best_v = step.logits->v[i];
      }
    }
    if (best == Vocabulary::kEos) break;
    out.ids.push_back(best);
    prev = best;
    h = step.h;
  }
  return out;
}

// Beam search with length-normalized log-probability. Fully deterministic:
// candidate ties break on token id, then source beam index.
template <class S>
DecodeResult<S> decode_beam(nn::Tape<S>& tape, const detail::DecoderRefs<S>& d,
                            const nn::AttendedKeys<S>* keys,
                            const nn::TensorPtr<S>& h0, int max_len,
                            int width) {
  if (width <= 1) return decode_greedy(tape, d, keys, h0, max_len);
  struct Beam {
    std::vector<int> ids;
    std::vector<nn::TensorPtr<S>> states;
    nn::TensorPtr<S> h;
    double logp = 0;
  };
  auto norm_score = [](const Beam& b) {
    return b.logp / static_cast<double>(b.ids.size() + 1);
  };

  std::vector<Beam> live;
  live.push_back(Beam{{}, {}, h0, 0.0});
  std::vector<Beam> finished;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    struct Cand {
      double logp;
      int tok;
      std::size_t beam;
    };
    std::vector<Cand> cands;
    std::vector<detail::StepResult<S>> steps;
    for (std::size_t b = 0; b < live.size(); ++b) {
      int prev = live[b].ids.empty() ? Vocabulary::kSos : live[b].ids.back();
      auto step = detail::decoder_step(tape, d, keys, prev, live[b].h);
      const int V = step.logits->rows();
      S mx = step.logits->v[0];
      for (int i = 1; i < V; ++i) mx = std::max(mx, step.logits->v[i]);
      double denom = 0;
      for (int i = 0; i < V; ++i) {
        denom += std::exp(static_cast<double>(step.logits->v[i] - mx));
      }
      const double lse = static_cast<double>(mx) + std::log(denom);
      for (int i = 0; i < V; ++i) {
        if (i == Vocabulary::kPad || i == Vocabulary::kSos) continue;
        cands.push_back(Cand{
            live[b].logp + static_cast<double>(step.logits->v[i]) - lse, i,
            b});
      }
      steps.push_back(std::move(step));
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.tok != b.tok) return a.tok < b.tok;
      return a.beam < b.beam;
    });
    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= width) break;
      Beam nb = live[c.beam];
      nb.states.push_back(steps[c.beam].h);
      nb.h = steps[c.beam].h;
      nb.logp = c.logp;
      if (c.tok == Vocabulary::kEos) {
        finished.push_back(std::move(nb));
      } else {
        nb.ids.push_back(c.tok);
        next.push_back(std::move(nb));
      }
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= width) break;
  }

  const Beam* best = nullptr;
  double best_score = 0;
  for (const auto& b : finished) {
    double s = norm_score(b);
    if (!best || s > best_score) {
      best = &b;
      best_score = s;
    }
  }
  if (!best) {
    for (const auto& b : live) {
      double s = norm_score(b);
      if (!best || s > best_score) {
        best = &b;
        best_score = s;
      }
    }
  }
  DecodeResult<S> out;
  if (best) {
    out.ids = best->ids;
    out.states = best->states;
  }
  return out;
}

}  // namespace ched::models
