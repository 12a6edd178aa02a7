#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "htru/model.hpp"

namespace htru {

// One feature vector per sample: the flattened recognition-head logits.
// Writer-head logits are never part of the feature.
struct MIAFeatures {
  int dim = 0;
  std::vector<double> rows;  // n x dim
  int n() const { return dim == 0 ? 0 : static_cast<int>(rows.size()) / dim; }
};

MIAFeatures extract_features(const ModelState& model, const Corpus& corpus,
                             int batch_size);

struct MIADatasetBundle {
  MIAFeatures train;            // 80% retain (member) + 80% test (non-member)
  std::vector<int> train_labels;
  MIAFeatures eval_retain;      // remaining 20%, member
  MIAFeatures eval_test;        // remaining 20%, non-member
  MIAFeatures query_forget;     // full forget set, unlabeled
};

MIADatasetBundle build_mia_dataset(const ModelState& htr_model,
                                   const Corpus& retain, const Corpus& test,
                                   const Corpus& forget, uint64_t seed,
                                   int batch_size);

struct MIAConfig {
  std::vector<int> hidden = {256, 64};  // exactly two hidden widths
  int epochs = 300;
  int batch_size = 64;
  double learning_rate = 1e-3;
  bool balance = true;  // down-sample the majority class in MIA training
  uint64_t seed = 0;
};

// Three linear layers with ReLU between them; binary output.
struct MIAModelState {
  int in_dim = 0;
  std::vector<int> hidden;
  std::vector<double> params;
  std::vector<double> feat_mean, feat_std;  // fitted on the MIA train split
};

MIAModelState train_mia(const MIADatasetBundle& bundle, const MIAConfig& cfg);

// Membership scores (sigmoid of the binary logit), one per row.
std::vector<double> mia_scores(const MIAModelState& mia, const MIAFeatures& f);

// Balanced accuracy on the eval split: mean of the member seen-rate and the
// non-member unseen-rate, so chance level is 50% regardless of class sizes.
double mia_eval_accuracy(const MIAModelState& mia,
                         const MIADatasetBundle& bundle);

struct MIARow {
  double seen = 0.0;    // percent classified member at threshold 0.5
  double unseen = 0.0;  // 100 - seen after the table rounding rule
  int n = 0;
};

struct MIAReport {
  std::optional<MIARow> forget;
  std::optional<MIARow> retain_eval;
  std::optional<MIARow> test_eval;
  uint64_t seed = 0;
  int epochs = 0;
  nlohmann::json to_json() const;
};

MIAReport evaluate_mia(const MIAModelState& mia, const MIADatasetBundle& bundle,
                       const MIAConfig& cfg);

}  // namespace htru
