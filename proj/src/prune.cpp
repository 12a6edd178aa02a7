#include "htru/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "htru/checkpoint.hpp"

namespace htru {

std::vector<double> ActivationStats::means(const std::string& layer) const {
  auto it = layers.find(layer);
  if (it == layers.end())
    throw Error("ActivationStats: unknown layer " + layer);
  std::vector<double> m(it->second.abs_sum.size(), 0.0);
  if (it->second.position_count > 0) {
    for (size_t i = 0; i < m.size(); ++i)
      m[i] = it->second.abs_sum[i] / static_cast<double>(it->second.position_count);
  }
  return m;
}

void ActivationStats::merge(const ActivationStats& other) {
  if (dataset_tag != other.dataset_tag)
    throw Error("ActivationStats: cannot merge different dataset tags");
  for (const auto& [name, layer] : other.layers) {
    auto it = layers.find(name);
    if (it == layers.end()) {
      layers[name] = layer;
      continue;
    }
    if (it->second.abs_sum.size() != layer.abs_sum.size())
      throw Error("ActivationStats: shape mismatch merging layer " + name);
    for (size_t i = 0; i < layer.abs_sum.size(); ++i)
      it->second.abs_sum[i] += layer.abs_sum[i];
    it->second.position_count += layer.position_count;
  }
  sample_count += other.sample_count;
}

ActivationStats collect_activation_stats(const ModelState& model,
                                         const Corpus& corpus,
                                         const LayerSelector& selector,
                                         int batch_size,
                                         const std::string& dataset_tag) {
  if (corpus.samples.empty())
    throw Error("collect_activation_stats: empty corpus");
  const std::set<std::string> names = tap_layer_names(model.cfg, selector);
  if (names.empty())
    throw Error("collect_activation_stats: selector matches no layers");

  ActivationStats stats;
  stats.dataset_tag = dataset_tag;
  const size_t n = corpus.samples.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + batch_size); ++i)
      idx.push_back(i);
    Batch batch = make_batch(corpus, idx, model.cfg.max_len);
    std::vector<double> writer_logits, rec_logits;
    std::vector<TapMap> taps;
    forward_batch(model, batch, nullptr, writer_logits, rec_logits, &names, &taps);
    for (const TapMap& tm : taps) {
      ++stats.sample_count;
      for (const auto& [name, tensor] : tm) {
        auto& layer = stats.layers[name];
        // Neuron axis: channels for conv taps, columns otherwise.
        int width, positions;
        if (tensor.shape.size() == 3) {
          width = tensor.shape[0];
          positions = tensor.shape[1] * tensor.shape[2];
        } else {
          width = tensor.shape[1];
          positions = tensor.shape[0];
        }
        if (layer.abs_sum.empty())
          layer.abs_sum.assign(static_cast<size_t>(width), 0.0);
        if (static_cast<int>(layer.abs_sum.size()) != width)
          throw Error("collect_activation_stats: width drift in layer " + name);
        if (tensor.shape.size() == 3) {
          for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            const double* p = tensor.ptr() + static_cast<size_t>(c) * positions;
            for (int i = 0; i < positions; ++i) acc += std::fabs(p[i]);
            layer.abs_sum[static_cast<size_t>(c)] += acc;
          }
        } else {
          for (int r = 0; r < positions; ++r) {
            const double* p = tensor.ptr() + static_cast<size_t>(r) * width;
            for (int c = 0; c < width; ++c)
              layer.abs_sum[static_cast<size_t>(c)] += std::fabs(p[c]);
          }
        }
        layer.position_count += positions;
      }
    }
  }
  return stats;
}

ImportanceScores importance_scores(const ActivationStats& forget_stats,
                                   const ActivationStats& retain_stats,
                                   double epsilon) {
  if (epsilon <= 0.0) throw Error("importance_scores: epsilon must be > 0");
  if (forget_stats.layers.size() != retain_stats.layers.size())
    throw Error("importance_scores: layer sets differ");
  ImportanceScores scores;
  scores.epsilon = epsilon;
  for (const auto& [name, f_layer] : forget_stats.layers) {
    auto it = retain_stats.layers.find(name);
    if (it == retain_stats.layers.end())
      throw Error("importance_scores: layer " + name + " missing in retain stats");
    const std::vector<double> f = forget_stats.means(name);
    const std::vector<double> r = retain_stats.means(name);
    if (f.size() != r.size())
      throw Error("importance_scores: shape mismatch in layer " + name);
    std::vector<double> s(f.size());
    for (size_t i = 0; i < f.size(); ++i)
      s[i] = (f[i] + epsilon) / (r[i] + epsilon);
    scores.layers[name] = std::move(s);
  }
  return scores;
}

int prune_count(int width, double rate_percent) {
  return static_cast<int>(std::floor(width * rate_percent / 100.0 + 0.5));
}

PruningPlan build_pruning_plan(const ImportanceScores& scores,
                               const ModelConfig& cfg,
                               const std::map<ModuleGroup, double>& group_rates,
                               const PlanOptions& opts) {
  for (const auto& [group, rate] : group_rates) {
    if (rate < 0.0 || rate >= 100.0)
      throw Error("build_pruning_plan: rate for " + module_group_name(group) +
                  " must lie in [0, 100)");
    if (opts.protect_heads && rate > 0.0 &&
        (group == ModuleGroup::head_writer ||
         group == ModuleGroup::head_recognition)) {
      throw Error("build_pruning_plan: head projections are protected; pass "
                  "--no-protect-heads to prune " + module_group_name(group));
    }
  }

  PruningPlan plan;
  for (const auto& [group, rate] : group_rates)
    plan.group_rates[module_group_name(group)] = rate;

  int64_t zeroed = 0;
  for (const MaskInfo& info : maskable_layers(cfg)) {
    auto rate_it = group_rates.find(info.group);
    if (rate_it == group_rates.end() || rate_it->second == 0.0) continue;
    auto score_it = scores.layers.find(info.layer);
    if (score_it == scores.layers.end())
      throw Error("build_pruning_plan: no scores for layer " + info.layer);
    const std::vector<double>& s = score_it->second;
    if (static_cast<int>(s.size()) != info.width)
      throw Error("build_pruning_plan: score width mismatch for " + info.layer);
    const int count = prune_count(info.width, rate_it->second);
    if (count == 0) continue;
    std::vector<int> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (s[static_cast<size_t>(a)] != s[static_cast<size_t>(b)])
        return s[static_cast<size_t>(a)] > s[static_cast<size_t>(b)];
      return a < b;  // ties toward the lower index
    });
    std::vector<int> chosen(idx.begin(), idx.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    zeroed += static_cast<int64_t>(count) * static_cast<int64_t>(info.params_per_unit);
    plan.layer_indices[info.layer] = std::move(chosen);
  }
  plan.global_sparsity =
      static_cast<double>(zeroed) / static_cast<double>(ParamRegistry(cfg).total());
  return plan;
}

ModelState apply_pruning(const ModelState& model, const PruningPlan& plan) {
  ModelState out = model;
  for (const auto& [layer, indices] : plan.layer_indices) {
    std::vector<double>& mask = out.mask(layer);
    for (int i : indices) {
      if (i < 0 || i >= static_cast<int>(mask.size()))
        throw Error("apply_pruning: index " + std::to_string(i) +
                    " out of range for layer " + layer);
      mask[static_cast<size_t>(i)] = 0.0;
    }
  }
  return out;
}

namespace {

// Weight/bias parameter names behind a maskable layer.
std::pair<std::string, std::string> mask_param_names(const std::string& layer) {
  if (layer.rfind("cnn.conv", 0) == 0 || layer == "embed.proj" ||
      layer == "head.writer" || layer == "head.rec")
    return {layer + ".w", layer + ".b"};
  const auto dot = layer.find('.');
  const std::string block = layer.substr(0, dot);
  const std::string part = layer.substr(dot + 1);
  if (part == "attn_out") return {block + ".attn.wo", block + ".attn.bo"};
  if (part == "ff1") return {block + ".ff.w1", block + ".ff.b1"};
  if (part == "ff2") return {block + ".ff.w2", block + ".ff.b2"};
  throw Error("mask_param_names: unknown maskable layer " + layer);
}

int64_t count_zero_row_params(const ModelState& model, const MaskInfo& info,
                              const std::vector<double>& record) {
  const auto [wn, bn] = mask_param_names(info.layer);
  const ParamInfo& winfo = model.reg.info(wn);
  const size_t row = winfo.size / record.size();
  const double* w = model.param(wn);
  const double* b = model.param(bn);
  int64_t zeroed = 0;
  for (size_t u = 0; u < record.size(); ++u) {
    if (record[u] != 0.0) continue;
    const double* wr = w + u * row;
    for (size_t i = 0; i < row; ++i) zeroed += wr[i] == 0.0 ? 1 : 0;
    zeroed += b[u] == 0.0 ? 1 : 0;
  }
  return zeroed;
}

}  // namespace

SparsityReport sparsity_report(const ModelState& model) {
  SparsityReport report;
  report.total_params = static_cast<int64_t>(model.param_count());
  std::map<std::string, int64_t> group_zeroed, group_total;

  const bool regrowth = !model.regrowth_record.empty();
  for (const MaskInfo& info : maskable_layers(model.cfg)) {
    const std::string gname = module_group_name(info.group);
    group_total[gname] +=
        static_cast<int64_t>(info.width) * static_cast<int64_t>(info.params_per_unit);
    int64_t zeroed = 0;
    if (!regrowth) {
      const std::vector<double>& mask = model.mask(info.layer);
      for (double v : mask) zeroed += v == 0.0 ? info.params_per_unit : 0;
    } else {
      auto rec_it = model.regrowth_record.find(info.layer);
      if (rec_it != model.regrowth_record.end()) {
        // Count recorded pruned rows' parameters that are still exactly 0.
        const std::vector<double>& record = rec_it->second;
        zeroed += count_zero_row_params(model, info, record);
      }
    }
    group_zeroed[gname] += zeroed;
    report.zeroed_params += zeroed;
  }
  for (const auto& [gname, total] : group_total) {
    report.per_group[gname] =
        total > 0 ? static_cast<double>(group_zeroed[gname]) / static_cast<double>(total)
                  : 0.0;
  }
  report.global = static_cast<double>(report.zeroed_params) /
                  static_cast<double>(report.total_params);
  return report;
}

void save_stats(const std::string& path, const ActivationStats& stats) {
  Container c;
  c.kind = "activation_stats";
  c.meta["dataset_tag"] = stats.dataset_tag;
  c.meta["sample_count"] = stats.sample_count;
  nlohmann::json counts;
  for (const auto& [name, layer] : stats.layers) {
    counts[name] = layer.position_count;
    c.arrays.emplace_back(name, layer.abs_sum);
  }
  c.meta["position_counts"] = counts;
  write_container(path, c);
}

ActivationStats load_stats(const std::string& path) {
  Container c = read_container(path, "activation_stats");
  ActivationStats stats;
  stats.dataset_tag = c.meta.at("dataset_tag").get<std::string>();
  stats.sample_count = c.meta.at("sample_count").get<int64_t>();
  for (const auto& [name, data] : c.arrays) {
    ActivationStats::Layer layer;
    layer.abs_sum = data;
    layer.position_count = c.meta.at("position_counts").at(name).get<int64_t>();
    stats.layers[name] = std::move(layer);
  }
  return stats;
}

void save_plan(const std::string& path, const PruningPlan& plan) {
  Container c;
  c.kind = "pruning_plan";
  c.meta["global_sparsity"] = plan.global_sparsity;
  c.meta["group_rates"] = plan.group_rates;
  for (const auto& [layer, indices] : plan.layer_indices) {
    std::vector<double> as_double(indices.begin(), indices.end());
    c.arrays.emplace_back(layer, std::move(as_double));
  }
  write_container(path, c);
}

PruningPlan load_plan(const std::string& path) {
  Container c = read_container(path, "pruning_plan");
  PruningPlan plan;
  plan.global_sparsity = c.meta.at("global_sparsity").get<double>();
  plan.group_rates =
      c.meta.at("group_rates").get<std::map<std::string, double>>();
  for (const auto& [layer, data] : c.arrays) {
    std::vector<int> indices(data.size());
    for (size_t i = 0; i < data.size(); ++i)
      indices[i] = static_cast<int>(data[i]);
    plan.layer_indices[layer] = std::move(indices);
  }
  return plan;
}

}  // namespace htru
