#include <cmath>
#include <random>

#include "htru/model.hpp"

namespace htru {

void ModelConfig::validate() const {
  if (cnn_channels.empty() || cnn_channels.size() > 6)
    throw Error("ModelConfig: cnn_channels must have 1..6 stages");
  for (int c : cnn_channels)
    if (c < 1) throw Error("ModelConfig: conv channel counts must be positive");
  if (d_model < 1 || n_blocks < 1 || n_heads < 1 || ff_dim < 1 || max_len < 1)
    throw Error("ModelConfig: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw Error("ModelConfig: d_model must be divisible by n_heads");
  if (alphabet_size != Alphabet::kNumClasses)
    throw Error("ModelConfig: alphabet_size must be 53");
  if (enable_writer_head && n_writers < 2)
    throw Error("ModelConfig: writer head needs n_writers >= 2");
  if ((64 >> static_cast<int>(cnn_channels.size())) < 1)
    throw Error("ModelConfig: too many conv stages for height 64");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"cnn_channels", cnn_channels},
                        {"d_model", d_model},
                        {"n_blocks", n_blocks},
                        {"n_heads", n_heads},
                        {"ff_dim", ff_dim},
                        {"n_writers", n_writers},
                        {"alphabet_size", alphabet_size},
                        {"max_len", max_len},
                        {"enable_writer_head", enable_writer_head},
                        {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_blocks = j.at("n_blocks").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.ff_dim = j.at("ff_dim").get<int>();
  cfg.n_writers = j.at("n_writers").get<int>();
  cfg.alphabet_size = j.at("alphabet_size").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.enable_writer_head = j.at("enable_writer_head").get<bool>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

std::string module_group_name(ModuleGroup g) {
  switch (g) {
    case ModuleGroup::embedding: return "embed";
    case ModuleGroup::attn_shallow: return "attn_shallow";
    case ModuleGroup::attn_middle: return "attn_middle";
    case ModuleGroup::attn_deep: return "attn_deep";
    case ModuleGroup::feed_forward: return "ff";
    case ModuleGroup::head_writer: return "head_writer";
    case ModuleGroup::head_recognition: return "head_recognition";
  }
  throw Error("module_group_name: bad group");
}

ModuleGroup module_group_from_name(const std::string& name) {
  for (ModuleGroup g :
       {ModuleGroup::embedding, ModuleGroup::attn_shallow,
        ModuleGroup::attn_middle, ModuleGroup::attn_deep,
        ModuleGroup::feed_forward, ModuleGroup::head_writer,
        ModuleGroup::head_recognition}) {
    if (module_group_name(g) == name) return g;
  }
  // Accept the longhand used in config files.
  if (name == "embedding") return ModuleGroup::embedding;
  if (name == "feed_forward") return ModuleGroup::feed_forward;
  throw ConfigError("unknown module group: " + name);
}

ModuleGroup attn_group_for_block(int block, int n_blocks) {
  const int third = (3 * block) / n_blocks;
  switch (third) {
    case 0: return ModuleGroup::attn_shallow;
    case 1: return ModuleGroup::attn_middle;
    default: return ModuleGroup::attn_deep;
  }
}

LayerSelector LayerSelector::all() {
  LayerSelector s;
  s.groups = {ModuleGroup::embedding,    ModuleGroup::attn_shallow,
              ModuleGroup::attn_middle,  ModuleGroup::attn_deep,
              ModuleGroup::feed_forward, ModuleGroup::head_writer,
              ModuleGroup::head_recognition};
  return s;
}

LayerSelector LayerSelector::one(ModuleGroup g) {
  LayerSelector s;
  s.groups = {g};
  return s;
}

void ParamRegistry::add(const std::string& name,
                        const std::vector<int>& shape) {
  ParamInfo info;
  info.name = name;
  info.shape = shape;
  info.offset = total_;
  info.size = 1;
  for (int d : shape) info.size *= static_cast<size_t>(d);
  total_ += info.size;
  index_[name] = entries_.size();
  entries_.push_back(std::move(info));
}

ParamRegistry::ParamRegistry(const ModelConfig& cfg) {
  const int d = cfg.d_model;
  int c_in = 1;
  for (size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const int c_out = cfg.cnn_channels[i];
    add("cnn.conv" + std::to_string(i) + ".w", {c_out, c_in, 3, 3});
    add("cnn.conv" + std::to_string(i) + ".b", {c_out});
    c_in = c_out;
  }
  add("embed.proj.w", {d, c_in});
  add("embed.proj.b", {d});
  add("embed.cls", {d});
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "ln1.g", {d});
    add(p + "ln1.b", {d});
    add(p + "attn.wq", {d, d});
    add(p + "attn.bq", {d});
    add(p + "attn.wk", {d, d});
    add(p + "attn.bk", {d});
    add(p + "attn.wv", {d, d});
    add(p + "attn.bv", {d});
    add(p + "attn.wo", {d, d});
    add(p + "attn.bo", {d});
    add(p + "ln2.g", {d});
    add(p + "ln2.b", {d});
    add(p + "ff.w1", {cfg.ff_dim, d});
    add(p + "ff.b1", {cfg.ff_dim});
    add(p + "ff.w2", {d, cfg.ff_dim});
    add(p + "ff.b2", {d});
  }
  add("final_ln.g", {d});
  add("final_ln.b", {d});
  add("head.rec.w", {cfg.alphabet_size, d});
  add("head.rec.b", {cfg.alphabet_size});
  if (cfg.enable_writer_head) {
    add("head.writer.w", {cfg.n_writers, d});
    add("head.writer.b", {cfg.n_writers});
  }
}

const ParamInfo& ParamRegistry::info(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamRegistry: unknown parameter " + name);
  return entries_[it->second];
}

std::vector<MaskInfo> maskable_layers(const ModelConfig& cfg) {
  std::vector<MaskInfo> infos;
  int c_in = 1;
  for (size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const int c_out = cfg.cnn_channels[i];
    infos.push_back({"cnn.conv" + std::to_string(i), c_out,
                     ModuleGroup::embedding, static_cast<size_t>(9 * c_in + 1)});
    c_in = c_out;
  }
  infos.push_back({"embed.proj", cfg.d_model, ModuleGroup::embedding,
                   static_cast<size_t>(c_in + 1)});
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    infos.push_back({p + "attn_out", cfg.d_model,
                     attn_group_for_block(b, cfg.n_blocks),
                     static_cast<size_t>(cfg.d_model + 1)});
    infos.push_back({p + "ff1", cfg.ff_dim, ModuleGroup::feed_forward,
                     static_cast<size_t>(cfg.d_model + 1)});
    infos.push_back({p + "ff2", cfg.d_model, ModuleGroup::feed_forward,
                     static_cast<size_t>(cfg.ff_dim + 1)});
  }
  if (cfg.enable_writer_head) {
    infos.push_back({"head.writer", cfg.n_writers, ModuleGroup::head_writer,
                     static_cast<size_t>(cfg.d_model + 1)});
  }
  infos.push_back({"head.rec", cfg.alphabet_size,
                   ModuleGroup::head_recognition,
                   static_cast<size_t>(cfg.d_model + 1)});
  return infos;
}

double* ModelState::param(const std::string& name) {
  return params.data() + reg.info(name).offset;
}

const double* ModelState::param(const std::string& name) const {
  return params.data() + reg.info(name).offset;
}

const std::vector<double>& ModelState::mask(const std::string& layer) const {
  auto it = masks.find(layer);
  if (it == masks.end()) throw Error("ModelState: unknown mask layer " + layer);
  return it->second;
}

std::vector<double>& ModelState::mask(const std::string& layer) {
  auto it = masks.find(layer);
  if (it == masks.end()) throw Error("ModelState: unknown mask layer " + layer);
  return it->second;
}

ModelState build_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState model;
  model.cfg = cfg;
  model.reg = ParamRegistry(cfg);
  model.params.assign(model.reg.total(), 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill_normal = [&](const std::string& name, double std_dev) {
    const ParamInfo& info = model.reg.info(name);
    double* p = model.params.data() + info.offset;
    for (size_t i = 0; i < info.size; ++i) p[i] = normal(rng) * std_dev;
  };
  auto fill_const = [&](const std::string& name, double v) {
    const ParamInfo& info = model.reg.info(name);
    double* p = model.params.data() + info.offset;
    for (size_t i = 0; i < info.size; ++i) p[i] = v;
  };

  int c_in = 1;
  for (size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    fill_normal("cnn.conv" + std::to_string(i) + ".w",
                std::sqrt(2.0 / (9.0 * c_in)));
    // Background pixels are exactly zero; a small positive bias keeps
    // pre-activations off the ReLU kink there.
    fill_const("cnn.conv" + std::to_string(i) + ".b", 0.01);
    c_in = cfg.cnn_channels[i];
  }
  fill_normal("embed.proj.w", std::sqrt(1.0 / c_in));
  fill_normal("embed.cls", 0.02);
  const double attn_std = std::sqrt(1.0 / cfg.d_model);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    fill_const(p + "ln1.g", 1.0);
    fill_normal(p + "attn.wq", attn_std);
    fill_normal(p + "attn.wk", attn_std);
    fill_normal(p + "attn.wv", attn_std);
    fill_normal(p + "attn.wo", attn_std);
    fill_const(p + "ln2.g", 1.0);
    fill_normal(p + "ff.w1", std::sqrt(2.0 / cfg.d_model));
    fill_normal(p + "ff.w2", std::sqrt(1.0 / cfg.ff_dim));
  }
  fill_const("final_ln.g", 1.0);
  fill_normal("head.rec.w", attn_std);
  if (cfg.enable_writer_head) fill_normal("head.writer.w", attn_std);

  for (const MaskInfo& info : maskable_layers(cfg)) {
    model.mask_order.push_back(info.layer);
    model.masks[info.layer].assign(static_cast<size_t>(info.width), 1.0);
  }
  return model;
}

void apply_masks_to_params(ModelState& model) {
  const auto zero_rows = [&](const std::string& w_name,
                             const std::string& b_name,
                             const std::vector<double>& mask) {
    const ParamInfo& winfo = model.reg.info(w_name);
    const size_t row = winfo.size / mask.size();
    double* w = model.params.data() + winfo.offset;
    double* b = model.param(b_name);
    for (size_t u = 0; u < mask.size(); ++u) {
      if (mask[u] != 0.0) continue;
      std::fill(w + u * row, w + (u + 1) * row, 0.0);
      b[u] = 0.0;
    }
  };
  for (size_t i = 0; i < model.cfg.cnn_channels.size(); ++i) {
    const std::string n = "cnn.conv" + std::to_string(i);
    zero_rows(n + ".w", n + ".b", model.mask(n));
  }
  zero_rows("embed.proj.w", "embed.proj.b", model.mask("embed.proj"));
  for (int b = 0; b < model.cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    zero_rows(p + ".attn.wo", p + ".attn.bo", model.mask(p + ".attn_out"));
    zero_rows(p + ".ff.w1", p + ".ff.b1", model.mask(p + ".ff1"));
    zero_rows(p + ".ff.w2", p + ".ff.b2", model.mask(p + ".ff2"));
  }
  if (model.cfg.enable_writer_head)
    zero_rows("head.writer.w", "head.writer.b", model.mask("head.writer"));
  zero_rows("head.rec.w", "head.rec.b", model.mask("head.rec"));
}

}  // namespace htru
