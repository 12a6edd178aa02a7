#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "htru/mia.hpp"
#include "htru/model.hpp"
#include "htru/prune.hpp"
#include "htru/train.hpp"

namespace htru {

// Flat-sectioned key-value experiment config. Parsing is strict: unknown
// sections or keys are errors, so config hashes stay honest.
struct ExperimentConfig {
  struct CorpusSection {
    std::string kind = "synthetic";  // synthetic | iam_format
    int n_writers = 8;
    int words_per_writer = 120;
    int test_words_per_writer = 30;
    int max_width = 256;
    uint64_t seed = 7;
    std::string lexicon_file;       // empty = built-in pool
    std::string test_lexicon_file;  // empty = built-in held-out pool
    std::string iam_root;
    std::string iam_train_partition;
    std::string iam_test_partition;
  } corpus;

  struct SplitSection {
    std::vector<int> forget_writers;
    uint64_t seed = 11;  // drives the random relabeling
  } split;

  struct ModelSection {
    std::vector<int> cnn_channels = {16, 32, 48, 64};
    int d_model = 128;
    int n_blocks = 4;
    int n_heads = 4;
    int ff_dim = 256;
    int max_len = 12;
    bool enable_writer_head = true;
    uint64_t seed = 21;
  } model;

  struct TrainSection {
    int batch_size = 64;
    double learning_rate = 2e-4;
    double decay_factor = 0.1;
    int decay_interval = 10;
    int epochs = 200;
    double w_rec = 1.0;
    double w_writer = 1.0;
    int eval_interval = 10;
    uint64_t seed = 31;
  } train;

  struct PruneSection {
    std::map<ModuleGroup, double> rates;
    double epsilon = 1e-8;
    bool protect_heads = true;
    int batch_size = 32;
  } prune;

  struct RlSection {
    std::vector<int64_t> iterations = {1000, 5000, 10000};
    double learning_rate = 0.0;  // 0 = final baseline learning rate
    int batch_size = 0;          // 0 = inherit train batch size
    bool allow_regrowth = false;
    bool forget_rec_loss = true;
  } rl;

  struct MiaSection {
    int epochs = 300;
    std::vector<int> hidden = {256, 64};
    bool balance = true;
    double learning_rate = 1e-3;
    int batch_size = 64;
    uint64_t seed = 41;
  } mia;

  struct OutputSection {
    std::string dir;
  } output;

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_string(const std::string& text);

  // Every key in fixed order with its effective value.
  std::string canonical() const;
  std::string hash() const;  // fnv-1a of the canonical form

  ModelConfig model_config(int n_writers) const;
  TrainConfig train_config() const;
  MIAConfig mia_config() const;
  void validate() const;
};

std::map<ModuleGroup, double> parse_rates(const std::string& text);
std::string format_rates(const std::map<ModuleGroup, double>& rates);

}  // namespace htru
