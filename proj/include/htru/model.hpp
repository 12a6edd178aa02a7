#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "htru/corpus.hpp"
#include "htru/tensor.hpp"

namespace htru {

struct ModelConfig {
  std::vector<int> cnn_channels = {16, 32, 48, 64};  // stride-2 conv stack
  int d_model = 128;
  int n_blocks = 4;
  int n_heads = 4;
  int ff_dim = 256;
  int n_writers = 2;
  int alphabet_size = 53;
  int max_len = 12;
  bool enable_writer_head = true;
  uint64_t seed = 0;

  int downsample() const { return 1 << static_cast<int>(cnn_channels.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

enum class ModuleGroup {
  embedding,
  attn_shallow,
  attn_middle,
  attn_deep,
  feed_forward,
  head_writer,
  head_recognition,
};

std::string module_group_name(ModuleGroup g);
ModuleGroup module_group_from_name(const std::string& name);
// Blocks are assigned to shallow/middle/deep thirds by (3*i)/n_blocks.
ModuleGroup attn_group_for_block(int block, int n_blocks);

struct LayerSelector {
  std::set<ModuleGroup> groups;
  static LayerSelector all();
  static LayerSelector one(ModuleGroup g);
  bool contains(ModuleGroup g) const { return groups.count(g) != 0; }
};

struct ParamInfo {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
  std::vector<int> shape;
};

class ParamRegistry {
 public:
  ParamRegistry() = default;
  explicit ParamRegistry(const ModelConfig& cfg);

  const std::vector<ParamInfo>& entries() const { return entries_; }
  size_t total() const { return total_; }
  const ParamInfo& info(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

 private:
  void add(const std::string& name, const std::vector<int>& shape);
  std::vector<ParamInfo> entries_;
  std::map<std::string, size_t> index_;
  size_t total_ = 0;
};

// One maskable layer: a set of output units that the pruning masks can zero.
struct MaskInfo {
  std::string layer;        // tap/mask name, e.g. "block0.attn_out"
  int width = 0;            // number of units
  ModuleGroup group;
  size_t params_per_unit = 0;  // incoming weights + bias rendered dead per unit
};

std::vector<MaskInfo> maskable_layers(const ModelConfig& cfg);

struct ModelState {
  ModelConfig cfg;
  ParamRegistry reg;
  std::vector<double> params;
  std::vector<std::string> mask_order;
  std::map<std::string, std::vector<double>> masks;
  // Prune-time masks recorded when fine-tuning runs with regrowth enabled
  // (active masks are lifted, weights start from zero).
  std::map<std::string, std::vector<double>> regrowth_record;

  double* param(const std::string& name);
  const double* param(const std::string& name) const;
  const std::vector<double>& mask(const std::string& layer) const;
  std::vector<double>& mask(const std::string& layer);
  size_t param_count() const { return reg.total(); }
};

// Deterministic initialization from cfg.seed; masks all-ones.
ModelState build_model(const ModelConfig& cfg);

// Zero the incoming weights and bias of every masked unit. Called after
// each optimizer step so masked neurons stay exactly dead.
void apply_masks_to_params(ModelState& model);

// ------------------------------------------------------------- batching

struct Batch {
  int B = 0;
  int W = 0;                      // padded width
  std::vector<double> images;     // [B x 64 x W], (255 - pixel)/255
  std::vector<int> widths;        // true widths before batch padding
  std::vector<int> writer_ids;    // empty when unlabeled
  std::vector<int> rec_targets;   // [B x max_len] slot indices
  std::vector<int64_t> sample_ids;
};

Batch make_batch(const Corpus& corpus, const std::vector<size_t>& indices,
                 int max_len);

// ------------------------------------------------------------- forward

struct BlockCache {
  std::vector<double> ln1_mean, ln1_rstd, h1, q, k, v, probs, ctx;
  std::vector<double> x_mid, ln2_mean, ln2_rstd, h2, f1;
};

struct ForwardCache {
  int B = 0, W = 0, L = 0, Tcols = 0, Hp = 0;
  std::vector<int> widths;
  std::vector<int> valid_tokens;               // content tokens per sample
  std::vector<int> conv_c, conv_h, conv_w;     // stage dims, index 0 = input
  std::vector<std::vector<double>> conv_acts;  // [stage][B*C*H*W]
  std::vector<double> pooled;                  // B x Tcols x c_last
  std::vector<std::vector<double>> xs;         // n_blocks+1 of B x L x d
  std::vector<BlockCache> blocks;
  std::vector<double> fin_mean, fin_rstd, y;   // final LayerNorm output
};

// Per-sample activation taps keyed by layer name; tensors cover only the
// valid extent of each sample (no batch-padding columns).
using TapMap = std::map<std::string, Tensor>;

void forward_batch(const ModelState& model, const Batch& batch,
                   ForwardCache* cache, std::vector<double>& writer_logits,
                   std::vector<double>& rec_logits,
                   const std::set<std::string>* tap_layers = nullptr,
                   std::vector<TapMap>* taps = nullptr);

struct ForwardOutput {
  std::vector<double> writer_logits;      // empty in single-head mode
  std::vector<double> recognition_logits; // max_len x alphabet_size
  TapMap activations;
};

std::vector<ForwardOutput> forward(const ModelState& model, const Batch& batch,
                                   const LayerSelector* taps = nullptr);

std::set<std::string> tap_layer_names(const ModelConfig& cfg,
                                      const LayerSelector& sel);

// d_writer_logits may be empty in single-head mode. When capture_dconv_last
// is set, the backward pass stops before the CNN stack and stores the
// gradient at the last conv activation there.
void backward_batch(const ModelState& model, const Batch& batch,
                    const ForwardCache& cache,
                    const std::vector<double>& d_writer_logits,
                    const std::vector<double>& d_rec_logits,
                    std::vector<double>& grads,
                    std::vector<double>* capture_dconv_last = nullptr);

// ------------------------------------------------------------- decoding

int argmax_index(const double* v, int n);  // ties break to the lowest index
std::string decode_greedy(const double* rec_logits, int max_len,
                          const Alphabet& alphabet);

// ------------------------------------------------------------- grad-cam

struct GradCamTarget {
  enum class Kind { writer_class, recognition_slot };
  Kind kind = Kind::writer_class;
  int writer_class = 0;
  int slot = 0;
  int char_class = 0;
};

struct GradCamResult {
  Tensor heatmap;    // last conv feature grid [Hc x Wc], values in [0,1]
  Tensor upsampled;  // bilinear companion at input resolution [64 x W]
};

GradCamResult gradcam(const ModelState& model, const GrayImage& image,
                      const GradCamTarget& target);

}  // namespace htru
