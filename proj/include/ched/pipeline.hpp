#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ched/corpus.hpp"
#include "ched/lexicon.hpp"
#include "ched/model.hpp"

namespace ched::pipeline {

using corpus::ContextWindow;
using corpus::Vocabulary;
using FloatModel = models::Model<float>;

struct TrainingTriplet {
  std::vector<std::vector<int>> context;  // id-encoded, one list per sentence
  std::vector<int> content;  // clean TRAINING-mode extraction of the response
  std::vector<int> response;
  int da_label = 0;  // 1..4, 0 when absent
};

// One triplet per window; the content sequence is stored clean, noise is
// applied lazily per epoch.
std::vector<TrainingTriplet> build_training_triplets(
    const std::vector<ContextWindow>& windows, const lex::FunctionLexicon& lex,
    const Vocabulary& vocab);

// Triplet cache: one triplet per line, three TAB-separated space-joined id
// lists. Context sentences are joined with a single EOS id between them.
void write_triplets(std::ostream& out,
                    const std::vector<TrainingTriplet>& triplets);
std::vector<TrainingTriplet> read_triplets(std::istream& in);

struct TrainOptions {
  int batch_size = 32;
  double lr = 3e-4;
  bool noise = true;
};

struct EpochReport {
  double loss = 0;           // mean per-sample total loss
  double content_loss = 0;   // 0 for plain HED
  double sentence_loss = 0;
  double da_loss = 0;
  std::size_t samples = 0;
  std::size_t batches = 0;
};

// Seeded shuffle, fresh per-sample noise, one Adam update per batch.
// Non-finite loss aborts the epoch with a diagnostic.
EpochReport train_epoch(const std::vector<TrainingTriplet>& triplets,
                        FloatModel& model, const TrainOptions& opt,
                        const std::vector<int>& insert_pool_ids, Rng& rng);

struct GenerateOptions {
  int beam = 1;  // 1: greedy
};

struct GenerationResult {
  std::vector<int> content_ids;   // empty for the HED variants
  std::vector<int> response_ids;
  int da_label = 0;  // 1..4 when the DA head is enabled, else 0
};

// Two-step decoding: content first, then the response conditioned on it as
// the architecture dictates. Read-only on the model.
GenerationResult generate(const FloatModel& model,
                          const std::vector<std::vector<int>>& context,
                          const GenerateOptions& opt = {});

// Checkpoint directory: manifest.txt (key-value lines) + params.bin
// (header listing name/shape/offset, then little-endian float32 data).
void save_checkpoint(const FloatModel& model, const Vocabulary& vocab,
                     int epoch,
                     const std::map<std::string, std::string>& extra,
                     const std::filesystem::path& dir);

struct CheckpointInfo {
  models::ModelConfig config;
  std::uint64_t vocab_hash = 0;
  int epoch = 0;
  std::int64_t adam_step = 0;
  std::map<std::string, std::string> extra;
};

CheckpointInfo read_manifest(const std::filesystem::path& dir);

// Rebuilds the model and loads the blob bit-exactly. Refuses to load when
// the manifest's vocab hash does not match `vocab`.
std::unique_ptr<FloatModel> load_checkpoint(const std::filesystem::path& dir,
                                            const Vocabulary& vocab,
                                            CheckpointInfo* info = nullptr);

}  // namespace ched::pipeline
