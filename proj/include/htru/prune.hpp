#pragma once

#include <map>
#include <string>
#include <vector>

#include "htru/model.hpp"

namespace htru {

// Per-neuron mean |activation| statistics for a set of layers.
// Internally keeps sums so shard merging is exact.
struct ActivationStats {
  struct Layer {
    std::vector<double> abs_sum;   // per neuron
    int64_t position_count = 0;    // samples x valid positions
  };
  std::map<std::string, Layer> layers;
  int64_t sample_count = 0;
  std::string dataset_tag;  // "forget" | "retain"

  std::vector<double> means(const std::string& layer) const;
  void merge(const ActivationStats& other);
};

ActivationStats collect_activation_stats(const ModelState& model,
                                         const Corpus& corpus,
                                         const LayerSelector& selector,
                                         int batch_size,
                                         const std::string& dataset_tag);

struct ImportanceScores {
  std::map<std::string, std::vector<double>> layers;
  double epsilon = 1e-8;
};

// score = (S_forget + eps) / (S_retain + eps), per neuron.
ImportanceScores importance_scores(const ActivationStats& forget_stats,
                                   const ActivationStats& retain_stats,
                                   double epsilon = 1e-8);

struct PruningPlan {
  std::map<std::string, std::vector<int>> layer_indices;  // sorted, per layer
  std::map<std::string, double> group_rates;              // percent per group
  double global_sparsity = 0.0;  // zeroed params / total params
};

// Per-layer count: round-half-up(K% x width); ties in scores break toward
// the lower index.
int prune_count(int width, double rate_percent);

struct PlanOptions {
  bool protect_heads = true;  // reject rates on head_recognition/head_writer
};

PruningPlan build_pruning_plan(const ImportanceScores& scores,
                               const ModelConfig& cfg,
                               const std::map<ModuleGroup, double>& group_rates,
                               const PlanOptions& opts = {});

// Sets mask entries to zero for the planned indices. Parameters are left
// untouched; idempotent.
ModelState apply_pruning(const ModelState& model, const PruningPlan& plan);

struct SparsityReport {
  double global = 0.0;                      // zeroed / total parameters
  std::map<std::string, double> per_group;  // zeroed-in-group / group params
  int64_t zeroed_params = 0;
  int64_t total_params = 0;
};

// Mask-based by default. After a regrowth fine-tune (masks lifted), counts
// the recorded pruned rows that are still exactly zero.
SparsityReport sparsity_report(const ModelState& model);

// Container (de)serialization shared with checkpoints.
void save_stats(const std::string& path, const ActivationStats& stats);
ActivationStats load_stats(const std::string& path);
void save_plan(const std::string& path, const PruningPlan& plan);
PruningPlan load_plan(const std::string& path);

}  // namespace htru
