#include "ched/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ched::pipeline {

std::vector<TrainingTriplet> build_training_triplets(
    const std::vector<ContextWindow>& windows, const lex::FunctionLexicon& lex,
    const Vocabulary& vocab) {
  std::vector<TrainingTriplet> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    TrainingTriplet t;
    for (const auto& s : w.context) {
      t.context.push_back(vocab.encode_sentence(s));
    }
    auto content = lex::extract_content_sequence(
        w.response, lex, lex::ExtractionMode::kTraining);
    t.content = vocab.encode_sentence(content.lemmas);
    t.response = vocab.encode_sentence(w.response);
    t.da_label = w.response_act;
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

void write_id_list(std::ostream& out, const std::vector<int>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out << ' ';
    out << ids[i];
  }
}

std::vector<int> parse_id_list(const std::string& field) {
  std::vector<int> ids;
  std::istringstream ss(field);
  int x;
  while (ss >> x) ids.push_back(x);
  return ids;
}

}  // namespace

void write_triplets(std::ostream& out,
                    const std::vector<TrainingTriplet>& triplets) {
  for (const auto& t : triplets) {
    std::vector<int> flat;
    for (std::size_t i = 0; i < t.context.size(); ++i) {
      if (i > 0) flat.push_back(Vocabulary::kEos);
      flat.insert(flat.end(), t.context[i].begin(), t.context[i].end());
    }
    write_id_list(out, flat);
    out << '\t';
    write_id_list(out, t.content);
    out << '\t';
    write_id_list(out, t.response);
    out << '\n';
  }
}

std::vector<TrainingTriplet> read_triplets(std::istream& in) {
  std::vector<TrainingTriplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t tab1 = line.find('\t');
    std::size_t tab2 = tab1 == std::string::npos
                           ? std::string::npos
                           : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw std::runtime_error("triplet cache: expected three fields");
    }
    TrainingTriplet t;
    std::vector<int> flat = parse_id_list(line.substr(0, tab1));
    std::vector<int> sent;
    for (int id : flat) {
      if (id == Vocabulary::kEos) {
        if (!sent.empty()) t.context.push_back(std::move(sent));
        sent.clear();
      } else {
        sent.push_back(id);
      }
    }
    if (!sent.empty()) t.context.push_back(std::move(sent));
    t.content = parse_id_list(line.substr(tab1 + 1, tab2 - tab1 - 1));
    t.response = parse_id_list(line.substr(tab2 + 1));
    out.push_back(std::move(t));
  }
  return out;
}

EpochReport train_epoch(const std::vector<TrainingTriplet>& triplets,
                        FloatModel& model, const TrainOptions& opt,
                        const std::vector<int>& insert_pool_ids, Rng& rng) {
  if (triplets.empty()) {
    throw std::invalid_argument("train_epoch: no triplets");
  }
  if (opt.batch_size < 1) {
    throw std::invalid_argument("train_epoch: batch_size must be >= 1");
  }
  std::vector<std::size_t> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  const bool content_arch = models::has_content_path(model.config().arch);
  EpochReport report;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(opt.batch_size)) {
    const std::size_t end = std::min(
        order.size(), start + static_cast<std::size_t>(opt.batch_size));
    const float inv = 1.0f / static_cast<float>(end - start);
    for (std::size_t k = start; k < end; ++k) {
      const TrainingTriplet& t = triplets[order[k]];
      std::vector<int> content = t.content;
      if (content_arch && opt.noise && !insert_pool_ids.empty()) {
        content = lex::inject_noise_seq(content, rng, insert_pool_ids);
      }
      nn::Tape<float> tape;
      auto fwd = models::forward(tape, model, t.context, content, t.response,
                                 model.config().da_head ? t.da_label : 0);
      const double loss = fwd.loss->v[0];
      if (!std::isfinite(loss)) {
        throw std::runtime_error(
            "train_epoch: non-finite loss at sample " +
            std::to_string(order[k]) + " (batch " +
            std::to_string(report.batches) + ")");
      }
      report.loss += loss;
      report.sentence_loss += fwd.sentence_loss->v[0];
      if (fwd.content_loss) report.content_loss += fwd.content_loss->v[0];
      if (fwd.da_loss) report.da_loss += fwd.da_loss->v[0];
      ++report.samples;
      tape.backward(fwd.loss, inv);
    }
    model.params().adam_update(opt.lr);
    ++report.batches;
  }
  const double n = static_cast<double>(report.samples);
  report.loss /= n;
  report.content_loss /= n;
  report.sentence_loss /= n;
  report.da_loss /= n;
  return report;
}

namespace {

using models::detail::content_keys;

models::DecodeResult<float> run_decode(nn::Tape<float>& tape,
                                       const models::detail::DecoderRefs<float>& refs,
                                       const nn::AttendedKeys<float>* keys,
                                       const nn::TensorPtr<float>& h0,
                                       int max_len, int beam) {
  if (beam > 1) {
    return models::decode_beam(tape, refs, keys, h0, max_len, beam);
  }
  return models::decode_greedy(tape, refs, keys, h0, max_len);
}

int argmax_label(const nn::TensorPtr<float>& probs) {
  int best = 0;
  for (int i = 1; i < probs->rows(); ++i) {
    if (probs->v[i] > probs->v[best]) best = i;
  }
  return best + 1;  // DA labels are 1-based
}

}  // namespace

GenerationResult generate(const FloatModel& model,
                          const std::vector<std::vector<int>>& context,
                          const GenerateOptions& opt) {
  const auto& cfg = model.config();
  const auto& parts = model.parts();
  nn::Tape<float> tape(false);

  auto enc = models::encode_context(tape, model, context);
  GenerationResult out;

  if (!models::has_content_path(cfg.arch)) {
    auto h0 = nn::mlp_bridge(tape, parts.mlp_sent, enc.dial_final);
    auto refs = models::detail::sentence_decoder_refs(
        model, cfg.arch == models::Arch::kHedAttn);
    std::optional<nn::AttendedKeys<float>> keys;
    if (refs.attn) {
      keys = nn::project_keys(tape, *refs.attn, enc.flat_states());
    }
    auto dec = run_decode(tape, refs, keys ? &*keys : nullptr, h0,
                          cfg.max_sent_len, opt.beam);
    out.response_ids = dec.ids;
    if (cfg.da_head) {
      out.da_label = argmax_label(models::predict_dialog_act(tape, model, h0));
    }
    return out;
  }

  // Step one: decode the content word sequence from the context.
  auto h0_cont = nn::mlp_bridge(tape, parts.mlp_cont, enc.dial_final);
  auto cont_refs = models::detail::content_decoder_refs(model);
  auto cont_attn_keys = nn::project_keys(tape, *cont_refs.attn,
                                         enc.flat_states());
  auto dec_c = run_decode(tape, cont_refs, &cont_attn_keys, h0_cont,
                          cfg.max_content_len, opt.beam);
  out.content_ids = dec_c.ids;

  // Step two: re-encode the content as the architecture dictates and decode
  // the sentence conditioned on it.
  std::vector<nn::TensorPtr<float>> sent_keys_src;
  nn::TensorPtr<float> z_cont;
  if (cfg.arch == models::Arch::kHedCd) {
    sent_keys_src = content_keys(dec_c.states, dec_c.ids.size());
    z_cont = sent_keys_src.back();
  } else {
    std::vector<int> tokens = dec_c.ids;
    if (tokens.empty()) tokens.push_back(Vocabulary::kEos);
    std::vector<nn::TensorPtr<float>> xs;
    xs.reserve(tokens.size());
    for (int id : tokens) xs.push_back(nn::row(tape, parts.emb, id));
    auto enc_cont = nn::encode_sequence(tape, xs, parts.enc_cont);
    sent_keys_src = enc_cont.states;
    z_cont = enc_cont.final;
  }

  auto bridge_in = nn::concat(tape, enc.dial_final, z_cont);
  auto h0_sent = nn::mlp_bridge(tape, parts.mlp_sent, bridge_in);
  auto sent_refs = models::detail::sentence_decoder_refs(model, true);
  auto sent_keys = nn::project_keys(tape, *sent_refs.attn, sent_keys_src);
  auto dec_y = run_decode(tape, sent_refs, &sent_keys, h0_sent,
                          cfg.max_sent_len, opt.beam);
  out.response_ids = dec_y.ids;
  if (cfg.da_head) {
    out.da_label =
        argmax_label(models::predict_dialog_act(tape, model, h0_sent));
  }
  return out;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

void put_f32le(std::ostream& out, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  char buf[4] = {static_cast<char>(bits & 0xff),
                 static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff),
                 static_cast<char>((bits >> 24) & 0xff)};
  out.write(buf, 4);
}

// Returns false at end of data; the caller reports which parameter broke.
bool get_f32le(std::istream& in, float& x) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) return false;
  std::uint32_t bits = static_cast<std::uint32_t>(buf[0]) |
                       (static_cast<std::uint32_t>(buf[1]) << 8) |
                       (static_cast<std::uint32_t>(buf[2]) << 16) |
                       (static_cast<std::uint32_t>(buf[3]) << 24);
  std::memcpy(&x, &bits, sizeof(x));
  return true;
}

std::string hex64(std::uint64_t x) {
  std::ostringstream ss;
  ss << std::hex << x;
  return ss.str();
}

}  // namespace

void save_checkpoint(const FloatModel& model, const Vocabulary& vocab,
                     int epoch,
                     const std::map<std::string, std::string>& extra,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = model.config();

  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) {
    throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  }
  manifest << "format ched-checkpoint-1\n";
  manifest << "arch " << models::arch_name(cfg.arch) << '\n';
  manifest << "vocab_size " << cfg.vocab_size << '\n';
  manifest << "emb_size " << cfg.emb_size << '\n';
  manifest << "enc_hidden " << cfg.enc_hidden << '\n';
  manifest << "dec_hidden " << cfg.dec_hidden << '\n';
  manifest << "attn_size " << cfg.attention_size() << '\n';
  manifest << "window " << cfg.window << '\n';
  manifest << "max_sent_len " << cfg.max_sent_len << '\n';
  manifest << "max_content_len " << cfg.max_content_len << '\n';
  manifest << "da_head " << (cfg.da_head ? 1 : 0) << '\n';
  manifest << "da_weight " << cfg.da_weight << '\n';
  manifest << "vocab_hash " << hex64(vocab.hash()) << '\n';
  manifest << "epoch " << epoch << '\n';
  manifest << "adam_step " << model.params().step() << '\n';
  for (const auto& [k, v] : extra) manifest << "metric." << k << ' ' << v << '\n';

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) {
    throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  }
  const auto& params = model.params().all();
  bin << "CHEDPARAMS 1\n";
  bin << "count " << params.size() << '\n';
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    bin << name << ' ' << t->shape.size();
    for (int d : t->shape) bin << ' ' << d;
    bin << ' ' << offset << '\n';
    offset += t->size() * 4;
  }
  bin << "DATA\n";
  for (const auto& [name, t] : params) {
    for (float x : t->v) put_f32le(bin, x);
  }
}

namespace {

std::map<std::string, std::string> read_kv_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos) continue;
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

}  // namespace

CheckpointInfo read_manifest(const std::filesystem::path& dir) {
  auto kv = read_kv_file(dir / "manifest.txt");
  auto need = [&kv, &dir](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw std::runtime_error("manifest.txt in " + dir.string() +
                               ": missing key `" + key + "`");
    }
    return it->second;
  };
  if (need("format") != "ched-checkpoint-1") {
    throw std::runtime_error("unsupported checkpoint format: " +
                             need("format"));
  }
  CheckpointInfo info;
  auto arch = models::arch_from_name(need("arch"));
  if (!arch) {
    throw std::runtime_error("manifest.txt: unknown arch " + need("arch"));
  }
  info.config.arch = *arch;
  info.config.vocab_size = std::stoi(need("vocab_size"));
  info.config.emb_size = std::stoi(need("emb_size"));
  info.config.enc_hidden = std::stoi(need("enc_hidden"));
  info.config.dec_hidden = std::stoi(need("dec_hidden"));
  info.config.attn_size = std::stoi(need("attn_size"));
  info.config.window = std::stoi(need("window"));
  info.config.max_sent_len = std::stoi(need("max_sent_len"));
  info.config.max_content_len = std::stoi(need("max_content_len"));
  info.config.da_head = need("da_head") == "1";
  info.config.da_weight = std::stod(need("da_weight"));
  info.vocab_hash = std::stoull(need("vocab_hash"), nullptr, 16);
  info.epoch = std::stoi(need("epoch"));
  info.adam_step = std::stoll(need("adam_step"));
  for (const auto& [k, v] : kv) {
    if (k.rfind("metric.", 0) == 0) info.extra[k.substr(7)] = v;
  }
  return info;
}

std::unique_ptr<FloatModel> load_checkpoint(const std::filesystem::path& dir,
                                            const Vocabulary& vocab,
                                            CheckpointInfo* info_out) {
  CheckpointInfo info = read_manifest(dir);
  if (info.vocab_hash != vocab.hash()) {
    throw std::runtime_error(
        "checkpoint vocabulary mismatch: manifest has " +
        hex64(info.vocab_hash) + ", loaded vocabulary hashes to " +
        hex64(vocab.hash()));
  }

  Rng dummy(0);
  auto model = std::make_unique<FloatModel>(info.config, dummy);

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) {
    throw std::runtime_error("cannot open " + (dir / "params.bin").string());
  }
  std::string magic, version;
  bin >> magic >> version;
  if (magic != "CHEDPARAMS" || version != "1") {
    throw std::runtime_error("params.bin: bad header");
  }
  std::string key;
  std::size_t count = 0;
  bin >> key >> count;
  if (key != "count") throw std::runtime_error("params.bin: missing count");

  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    Entry e;
    std::size_t ndims = 0;
    bin >> e.name >> ndims;
    e.shape.resize(ndims);
    for (auto& d : e.shape) bin >> d;
    bin >> e.offset;
    if (!bin) throw std::runtime_error("params.bin: truncated header");
    entries.push_back(std::move(e));
  }
  bin >> key;
  if (key != "DATA") throw std::runtime_error("params.bin: missing DATA mark");
  bin.get();  // newline after DATA

  const auto& params = model->params().all();
  std::size_t loaded = 0;
  std::streampos data_start = bin.tellg();
  for (const auto& e : entries) {
    auto it = params.find(e.name);
    if (it == params.end()) {
      throw std::runtime_error("params.bin: unknown parameter " + e.name);
    }
    if (it->second->shape != e.shape) {
      throw std::runtime_error("params.bin: shape mismatch for parameter " +
                               e.name);
    }
    bin.seekg(data_start + static_cast<std::streamoff>(e.offset));
    for (auto& x : it->second->v) {
      if (!get_f32le(bin, x)) {
        throw std::runtime_error("params.bin: truncated data for parameter " +
                                 e.name);
      }
    }
    ++loaded;
  }
  if (loaded != params.size()) {
    for (const auto& [name, _] : params) {
      bool found = false;
      for (const auto& e : entries) {
        if (e.name == name) {
          found = true;
          break;
        }
      }
      if (!found) {
        throw std::runtime_error("params.bin: missing parameter " + name);
      }
    }
  }
  if (info_out) *info_out = info;
  return model;
}

}  // namespace ched::pipeline
