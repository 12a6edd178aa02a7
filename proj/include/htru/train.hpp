#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "htru/checkpoint.hpp"
#include "htru/corpus.hpp"
#include "htru/model.hpp"

namespace htru {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 2e-4;
  double decay_factor = 0.1;  // multiply lr by this every decay_interval
  int decay_interval = 10;    // epochs
  int epochs = 200;
  double w_rec = 1.0;
  double w_writer = 1.0;
  uint64_t seed = 0;
  int eval_interval = 10;  // snapshot + checkpoint cadence, in epochs
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
};

struct LossValues {
  double rec = 0.0;
  double writer = 0.0;
  double total = 0.0;
};

// Cross-entropy losses over a batch of logits. When gradient buffers are
// passed they receive d(total)/d(logits) including the loss weights.
// rec_include, when given, selects which samples contribute recognition
// loss (used by random-label fine-tuning with --forget-rec-loss off).
LossValues compute_loss(const ModelConfig& cfg,
                        const std::vector<double>& writer_logits,
                        const std::vector<double>& rec_logits,
                        const Batch& batch, double w_rec, double w_writer,
                        std::vector<double>* d_writer = nullptr,
                        std::vector<double>* d_rec = nullptr,
                        const std::vector<int>* rec_include = nullptr);

struct EvalResult {
  double writer_acc = -1.0;  // negative when not applicable
  double cer = 0.0;
  double wer = 0.0;
  int n_samples = 0;
  nlohmann::json to_json() const;
};

EvalResult evaluate_model(const ModelState& model, const Corpus& corpus,
                          int batch_size);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double rec_loss = 0.0;
  double writer_loss = 0.0;
  nlohmann::json snapshot;  // eval results at snapshot epochs, else null
};

struct TrainLog {
  std::string config_hash;
  std::vector<EpochRecord> records;
  nlohmann::json to_json() const;
  // Append-only line-delimited records, one JSON object per line.
  void save_jsonl(const std::string& path) const;
};

struct EvalSets {
  const Corpus* retain = nullptr;
  const Corpus* forget = nullptr;
  const Corpus* test = nullptr;
};

struct BaselineOptions {
  EvalSets eval;
  std::string checkpoint_dir;  // when set, checkpoints at snapshot epochs
  // Resume: model already holds the checkpointed params; train state gives
  // the optimizer moments and the next epoch index.
  const TrainState* resume = nullptr;
};

// Deterministic: the data order of epoch e derives from (cfg.seed, e), so a
// resumed run continues bit-identically.
TrainLog train_baseline(ModelState& model, const Corpus& train_corpus,
                        const TrainConfig& cfg,
                        const BaselineOptions& opts = {});

struct FinetuneOptions {
  bool allow_regrowth = false;   // lift masks, let pruned weights regrow
  bool forget_rec_loss = true;   // include forget samples in recognition loss
  std::vector<int64_t> milestones;  // ascending optimizer-step counts
  std::function<void(int64_t, ModelState&, const TrainState&)> on_milestone;
  const TrainState* resume = nullptr;
  int64_t resume_iteration = 0;
};

// Stage II: fine-tune on retain + relabeled forget. Writer targets of the
// forget set are the randomized ids; recognition targets are unchanged.
TrainLog finetune_random_label(ModelState& model, const Corpus& retain,
                               const RelabelResult& forget_relabel,
                               const TrainConfig& cfg, int64_t iterations,
                               const FinetuneOptions& opts = {});

}  // namespace htru
