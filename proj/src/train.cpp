#include "htru/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "htru/kernels.hpp"
#include "htru/metrics.hpp"

namespace htru {

namespace k = kernels;

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw Error("TrainConfig: learning_rate must be positive");
  if (decay_factor <= 0.0 || decay_interval < 1)
    throw Error("TrainConfig: invalid decay schedule");
  if (epochs < 0) throw Error("TrainConfig: epochs must be >= 0");
  if (w_rec < 0.0 || w_writer < 0.0)
    throw Error("TrainConfig: loss weights must be >= 0");
  if (eval_interval < 1) throw Error("TrainConfig: eval_interval must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"batch_size", batch_size},
                        {"learning_rate", learning_rate},
                        {"decay_factor", decay_factor},
                        {"decay_interval", decay_interval},
                        {"epochs", epochs},
                        {"w_rec", w_rec},
                        {"w_writer", w_writer},
                        {"seed", seed},
                        {"eval_interval", eval_interval}};
}

namespace {

// -log softmax[target] with the log-sum-exp trick; optionally writes
// (softmax - onehot) * scale into dlogits.
double cross_entropy_row(const double* logits, int n, int target, double scale,
                         double* dlogits) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  if (dlogits != nullptr) {
    for (int i = 0; i < n; ++i) {
      const double p = std::exp(logits[i] - lse);
      dlogits[i] += scale * (p - (i == target ? 1.0 : 0.0));
    }
  }
  return lse - logits[target];
}

}  // namespace

LossValues compute_loss(const ModelConfig& cfg,
                        const std::vector<double>& writer_logits,
                        const std::vector<double>& rec_logits,
                        const Batch& batch, double w_rec, double w_writer,
                        std::vector<double>* d_writer, std::vector<double>* d_rec,
                        const std::vector<int>* rec_include) {
  const int B = batch.B;
  const int A = cfg.alphabet_size;
  if (static_cast<int>(batch.rec_targets.size()) != B * cfg.max_len)
    throw Error("compute_loss: rec target size mismatch");
  for (int t : batch.rec_targets)
    if (t < 0 || t >= A)
      throw Error("compute_loss: recognition target id out of range");

  int included = 0;
  if (rec_include != nullptr) {
    for (int b = 0; b < B; ++b) included += (*rec_include)[static_cast<size_t>(b)] ? 1 : 0;
  } else {
    included = B;
  }

  LossValues out;
  if (d_rec != nullptr) d_rec->assign(rec_logits.size(), 0.0);
  if (included > 0) {
    const double inv = 1.0 / (static_cast<double>(included) * cfg.max_len);
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      if (rec_include != nullptr && !(*rec_include)[static_cast<size_t>(b)]) continue;
      for (int s = 0; s < cfg.max_len; ++s) {
        const size_t off = (static_cast<size_t>(b) * cfg.max_len + s) * A;
        acc += cross_entropy_row(
            rec_logits.data() + off, A,
            batch.rec_targets[static_cast<size_t>(b) * cfg.max_len + s],
            w_rec * inv, d_rec != nullptr ? d_rec->data() + off : nullptr);
      }
    }
    out.rec = acc / (static_cast<double>(included) * cfg.max_len);
  }

  if (cfg.enable_writer_head) {
    if (static_cast<int>(batch.writer_ids.size()) != B)
      throw Error("compute_loss: writer target size mismatch");
    for (int t : batch.writer_ids)
      if (t < 0 || t >= cfg.n_writers)
        throw Error("compute_loss: writer target id out of range");
    if (d_writer != nullptr) d_writer->assign(writer_logits.size(), 0.0);
    const double inv = 1.0 / B;
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      const size_t off = static_cast<size_t>(b) * cfg.n_writers;
      acc += cross_entropy_row(
          writer_logits.data() + off, cfg.n_writers,
          batch.writer_ids[static_cast<size_t>(b)], w_writer * inv,
          d_writer != nullptr ? d_writer->data() + off : nullptr);
    }
    out.writer = acc * inv;
  } else if (d_writer != nullptr) {
    d_writer->clear();
  }

  out.total = w_rec * out.rec + w_writer * out.writer;
  return out;
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json j{{"cer", cer}, {"wer", wer}, {"n", n_samples}};
  if (writer_acc >= 0.0) j["acc"] = writer_acc;
  return j;
}

EvalResult evaluate_model(const ModelState& model, const Corpus& corpus,
                          int batch_size) {
  if (corpus.samples.empty()) throw Error("evaluate_model: empty corpus");
  const ModelConfig& cfg = model.cfg;
  bool acc_applicable = cfg.enable_writer_head;
  for (const auto& s : corpus.samples)
    if (s.writer_id >= cfg.n_writers) acc_applicable = false;

  std::vector<std::string> refs, hyps;
  std::vector<int> preds, trues;
  const size_t n = corpus.samples.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + batch_size); ++i)
      idx.push_back(i);
    Batch batch = make_batch(corpus, idx, cfg.max_len);
    std::vector<double> writer_logits, rec_logits;
    forward_batch(model, batch, nullptr, writer_logits, rec_logits);
    for (int b = 0; b < batch.B; ++b) {
      const Sample& s = corpus.samples[idx[static_cast<size_t>(b)]];
      refs.push_back(s.transcription);
      hyps.push_back(decode_greedy(
          rec_logits.data() + static_cast<size_t>(b) * cfg.max_len * cfg.alphabet_size,
          cfg.max_len, corpus.alphabet));
      if (acc_applicable) {
        preds.push_back(argmax_index(
            writer_logits.data() + static_cast<size_t>(b) * cfg.n_writers,
            cfg.n_writers));
        trues.push_back(s.writer_id);
      }
    }
  }
  EvalResult r;
  r.cer = cer(refs, hyps);
  r.wer = wer(refs, hyps);
  r.n_samples = static_cast<int>(n);
  if (acc_applicable) r.writer_acc = writer_accuracy(preds, trues);
  return r;
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json j{{"epoch", rec.epoch},
                     {"lr", rec.lr},
                     {"rec_loss", rec.rec_loss},
                     {"writer_loss", rec.writer_loss},
                     {"config_hash", config_hash}};
    if (!rec.snapshot.is_null()) j["snapshot"] = rec.snapshot;
    arr.push_back(std::move(j));
  }
  return arr;
}

void TrainLog::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("TrainLog: cannot open " + path);
  for (const auto& j : to_json()) out << j.dump() << '\n';
}

namespace {

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, 0xE90C4u, static_cast<uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct Trainer {
  ModelState& model;
  const TrainConfig& cfg;
  TrainState state;
  std::vector<double> grads;

  Trainer(ModelState& m, const TrainConfig& c, const TrainState* resume)
      : model(m), cfg(c) {
    if (resume != nullptr) {
      state = *resume;
      if (state.adam_m.size() != model.params.size())
        throw Error("train: resume state does not match the model");
    } else {
      state.adam_m.assign(model.params.size(), 0.0);
      state.adam_v.assign(model.params.size(), 0.0);
      state.step = 0;
      state.epoch = 0;
      state.rng_state = "derived:" + std::to_string(cfg.seed);
    }
  }

  // Returns (rec_loss, writer_loss) for the batch.
  LossValues step(const Corpus& corpus, const std::vector<size_t>& idx,
                  double lr, const std::vector<int>* rec_include,
                  const std::string& where) {
    Batch batch = make_batch(corpus, idx, model.cfg.max_len);
    ForwardCache cache;
    std::vector<double> writer_logits, rec_logits;
    forward_batch(model, batch, &cache, writer_logits, rec_logits);
    std::vector<double> d_writer, d_rec;
    LossValues loss =
        compute_loss(model.cfg, writer_logits, rec_logits, batch, cfg.w_rec,
                     cfg.w_writer, &d_writer, &d_rec, rec_include);
    if (!std::isfinite(loss.total))
      throw Error("train: non-finite loss at " + where);
    grads.assign(model.params.size(), 0.0);
    backward_batch(model, batch, cache, d_writer, d_rec, grads);
    ++state.step;
    k::adam_step(model.params.size(), model.params.data(), grads.data(),
                 state.adam_m.data(), state.adam_v.data(), state.step, lr,
                 cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    apply_masks_to_params(model);
    return loss;
  }
};

}  // namespace

TrainLog train_baseline(ModelState& model, const Corpus& train_corpus,
                        const TrainConfig& cfg, const BaselineOptions& opts) {
  cfg.validate();
  if (train_corpus.samples.empty())
    throw Error("train_baseline: empty training corpus");
  if (model.cfg.enable_writer_head &&
      model.cfg.n_writers != train_corpus.n_writers())
    throw Error("train_baseline: model n_writers does not match the corpus");

  TrainLog log;
  log.config_hash = to_hex64(fnv1a64(cfg.to_json().dump()));
  Trainer trainer(model, cfg, opts.resume);

  const size_t n = train_corpus.samples.size();
  for (int epoch = trainer.state.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * std::pow(cfg.decay_factor, epoch / cfg.decay_interval);
    const auto order = epoch_order(n, cfg.seed, epoch);
    double rec_acc = 0.0, writer_acc = 0.0;
    int batches = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                              order.begin() +
                                  static_cast<long>(std::min(n, start + cfg.batch_size)));
      const LossValues loss = trainer.step(
          train_corpus, idx, lr, nullptr,
          "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches));
      rec_acc += loss.rec;
      writer_acc += loss.writer;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.rec_loss = batches > 0 ? rec_acc / batches : 0.0;
    rec.writer_loss = batches > 0 ? writer_acc / batches : 0.0;

    const bool snapshot_epoch =
        (epoch + 1) % cfg.eval_interval == 0 || epoch + 1 == cfg.epochs;
    if (snapshot_epoch) {
      nlohmann::json snap;
      if (opts.eval.retain != nullptr)
        snap["retain"] = evaluate_model(model, *opts.eval.retain, cfg.batch_size).to_json();
      if (opts.eval.forget != nullptr)
        snap["forget"] = evaluate_model(model, *opts.eval.forget, cfg.batch_size).to_json();
      if (opts.eval.test != nullptr)
        snap["test"] = evaluate_model(model, *opts.eval.test, cfg.batch_size).to_json();
      if (!snap.is_null()) rec.snapshot = snap;
      if (!opts.checkpoint_dir.empty()) {
        trainer.state.epoch = epoch + 1;
        save_checkpoint(opts.checkpoint_dir + "/baseline_ep" +
                            std::to_string(epoch + 1) + ".ckpt",
                        model, &trainer.state);
      }
    }
    log.records.push_back(std::move(rec));
  }
  trainer.state.epoch = cfg.epochs;
  if (!opts.checkpoint_dir.empty())
    save_checkpoint(opts.checkpoint_dir + "/baseline.ckpt", model, &trainer.state);
  return log;
}

TrainLog finetune_random_label(ModelState& model, const Corpus& retain,
                               const RelabelResult& forget_relabel,
                               const TrainConfig& cfg, int64_t iterations,
                               const FinetuneOptions& opts) {
  cfg.validate();
  if (!model.cfg.enable_writer_head)
    throw Error("finetune_random_label: model has no writer head");
  const Corpus& forget = forget_relabel.corpus;
  if (forget.samples.size() != forget_relabel.original_writer_ids.size())
    throw Error("finetune_random_label: relabel bookkeeping size mismatch");
  for (size_t i = 0; i < forget.samples.size(); ++i) {
    if (forget.samples[i].writer_id ==
        forget_relabel.original_writer_ids[i]) {
      throw Error("finetune_random_label: forget sample " +
                  std::to_string(forget.samples[i].id) +
                  " still carries its original writer id");
    }
  }

  // Merged training set: retain with true ids + forget with random ids.
  Corpus merged;
  merged.alphabet = retain.alphabet;
  merged.writer_registry = retain.writer_registry;
  merged.provenance = retain.provenance;
  merged.samples = retain.samples;
  merged.samples.insert(merged.samples.end(), forget.samples.begin(),
                        forget.samples.end());
  std::vector<int> rec_include_all(merged.samples.size(), 1);
  if (!opts.forget_rec_loss) {
    for (size_t i = retain.samples.size(); i < merged.samples.size(); ++i)
      rec_include_all[i] = 0;
  }

  if (opts.allow_regrowth && opts.resume == nullptr) {
    bool any = false;
    for (const auto& [layer, mask] : model.masks)
      for (double v : mask) any = any || v == 0.0;
    if (any) {
      apply_masks_to_params(model);  // pruned weights restart from zero
      model.regrowth_record = model.masks;
      for (auto& [layer, mask] : model.masks)
        std::fill(mask.begin(), mask.end(), 1.0);
    }
  }

  TrainLog log;
  log.config_hash = to_hex64(fnv1a64(cfg.to_json().dump()));
  Trainer trainer(model, cfg, opts.resume);

  const size_t n = merged.samples.size();
  const int64_t bpe =
      static_cast<int64_t>((n + cfg.batch_size - 1) / static_cast<size_t>(cfg.batch_size));
  std::vector<size_t> order;
  int64_t order_epoch = -1;

  double rec_acc = 0.0, writer_acc = 0.0;
  int64_t batches_logged = 0;
  size_t next_milestone = 0;
  while (next_milestone < opts.milestones.size() &&
         opts.milestones[next_milestone] <= opts.resume_iteration)
    ++next_milestone;

  for (int64_t it = opts.resume_iteration; it < iterations; ++it) {
    const int64_t epoch = it / bpe;
    const int64_t batch_idx = it % bpe;
    if (epoch != order_epoch) {
      order = epoch_order(n, cfg.seed, epoch);
      order_epoch = epoch;
    }
    const size_t start = static_cast<size_t>(batch_idx) * cfg.batch_size;
    std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                            order.begin() +
                                static_cast<long>(std::min(n, start + cfg.batch_size)));
    std::vector<int> rec_include;
    for (size_t i : idx) rec_include.push_back(rec_include_all[i]);
    const LossValues loss =
        trainer.step(merged, idx, cfg.learning_rate, &rec_include,
                     "iteration " + std::to_string(it));
    rec_acc += loss.rec;
    writer_acc += loss.writer;
    ++batches_logged;

    if ((it + 1) % bpe == 0 || it + 1 == iterations) {
      EpochRecord rec;
      rec.epoch = static_cast<int>(epoch);
      rec.lr = cfg.learning_rate;
      rec.rec_loss = rec_acc / batches_logged;
      rec.writer_loss = writer_acc / batches_logged;
      log.records.push_back(std::move(rec));
      rec_acc = writer_acc = 0.0;
      batches_logged = 0;
    }
    if (next_milestone < opts.milestones.size() &&
        it + 1 == opts.milestones[next_milestone]) {
      if (opts.on_milestone) opts.on_milestone(it + 1, model, trainer.state);
      ++next_milestone;
    }
  }
  return log;
}

}  // namespace htru
