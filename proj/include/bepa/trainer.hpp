#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/encoder.hpp"
#include "bepa/objective.hpp"
#include "bepa/tokenize.hpp"

namespace bepa::trainer {

using numerics::Matrix;
using numerics::Tape;

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  int warmup_steps = 500;
  int batch_size = 16;
  int epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double mask_prob = 0.15;
  double lambda = 1.0;
  objective::AlignmentLoss alignment_loss = objective::AlignmentLoss::kInfoNce;
  double temperature = 0.1;
  corpus::PackingMode mode = corpus::PackingMode::kBilingual;
  std::uint64_t seed = 0;
  // Drops the alignment passes from the step graph entirely. Internal switch
  // with no config-file spelling; lambda = 0 must be indistinguishable from it
  // in every parameter update.
  bool mlm_only = false;

  void validate() const;
};

// Strict parsers: unknown keys are configuration errors, all known keys are
// optional and default as above. vocab_size is derived from the corpus and
// may not appear in a config file.
TrainConfig train_config_from_json(const nlohmann::json& j);
encoder::EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const encoder::EncoderConfig& c);

// Top-level config file: {"encoder": {...}, "train": {...}}, both optional.
struct RunConfig {
  encoder::EncoderConfig enc;
  TrainConfig train;
};
RunConfig run_config_from_json(const nlohmann::json& j);

// Linear warmup to the base rate over warmup_steps, constant afterwards.
// step counts from 1.
double lr_at_step(const TrainConfig& c, long step);

struct AdamState {
  encoder::ModelParams m, v;
  long step = 0;
  static AdamState init(const encoder::ModelParams& params);
};

// Decoupled weight decay: p -= lr * mhat / (sqrt(vhat) + eps) + lr * wd * p,
// bias-corrected, decay applied uniformly to every parameter.
void adamw_step(encoder::ModelParams& params, const encoder::ModelParams& grads,
                AdamState& state, const TrainConfig& config);

// Deterministic, data-independent split: indices ordered by
// (splitmix64(index), index); the first floor(n/10) become validation.
// Both halves are returned in ascending index order.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
Split split_pairs(std::size_t n);

// split_pairs over the raw corpus, then each pool filtered down to the pairs
// eligible for the packing mode. Evaluation tools use this so their
// validation set is exactly the one training held out.
struct CorpusSplit {
  std::vector<corpus::ParallelPair> train;
  std::vector<corpus::ParallelPair> validation;
};
CorpusSplit split_corpus(const std::vector<corpus::ParallelPair>& pairs,
                         corpus::PackingMode mode);

// Sequential [begin, end) validation chunks of batch_size; a trailing
// single-element chunk folds into its predecessor so every chunk used for
// in-batch scoring has at least two pairs whenever the pool allows it.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(
    std::size_t n, std::size_t batch_size);

struct PackedBatch {
  std::vector<tokenize::PackedExample> examples;
  std::vector<tokenize::MlmTarget> targets;
  std::vector<tokenize::AlignmentMasks> masks;
  std::size_t label_count = 0;
};

PackedBatch pack_batch(const std::vector<corpus::ParallelPair>& batch,
                       const tokenize::Vocab& vocab, int max_len,
                       double mask_prob, Rng& corrupt_rng);

struct StepGraph {
  Tape::NodeId mlm = 0;
  Tape::NodeId alignment = 0;  // meaningful only when has_alignment
  Tape::NodeId total = 0;
  bool has_alignment = false;
};

// One training step on one tape: a joint MLM pass over every example plus,
// unless alignment is disabled, the two occluded alignment passes feeding
// the configured alignment loss. total = mlm + lambda * alignment.
StepGraph build_step_graph(Tape& tape, const encoder::ParamNodes& nodes,
                           const encoder::EncoderConfig& enc,
                           const TrainConfig& config, const PackedBatch& batch,
                           const encoder::Predictor& predictor, bool training,
                           Rng* dropout_rng);

struct StepLosses {
  double mlm = 0.0;
  double alignment = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mlm = 0.0;
  double train_alignment = 0.0;
  double train_total = 0.0;
  double val_mlm = 0.0;
  double val_alignment = 0.0;
  double val_total = 0.0;
  double rankme = 0.0;
  double mean_pos_cosine = 0.0;
  double mean_neg_cosine = 0.0;
};

// One JSON object per record, fixed key order; non-finite values serialize
// as null. Equal records always serialize to equal bytes.
std::string epoch_record_json_line(const EpochRecord& r);
void write_metrics_jsonl(const std::vector<EpochRecord>& records,
                         const std::string& path);

struct ValReport {
  double mlm = 0.0;
  double alignment = 0.0;
  std::vector<encoder::PairEmbeddings> embeddings;  // aligned with val pairs
};

ValReport evaluate_validation(const encoder::ModelParams& params,
                              const tokenize::Vocab& vocab,
                              const std::vector<corpus::ParallelPair>& val_pairs,
                              const TrainConfig& config,
                              const encoder::Predictor& predictor);

struct TrainResult {
  encoder::ModelParams params;
  tokenize::Vocab vocab;
  std::vector<EpochRecord> log;
  std::vector<corpus::ParallelPair> train_pairs;
  std::vector<corpus::ParallelPair> validation_pairs;
  long total_steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full training run: vocabulary construction, split, per-epoch validation
// metrics. enc.vocab_size is taken from the corpus, not the caller.
TrainResult train(const std::vector<corpus::ParallelPair>& pairs,
                  encoder::EncoderConfig enc, const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace bepa::trainer
