#include "htru/pipeline.hpp"

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "htru/dataset_io.hpp"
#include "htru/metrics.hpp"

namespace fs = std::filesystem;

namespace htru {

const std::vector<std::string> kPipelineStages = {
    "gen-data",    "split",      "train",   "eval-baseline", "mia-baseline",
    "prune",       "eval-pruned", "mia-pruned", "unlearn",   "report"};

PipelineLock::PipelineLock(const std::string& out_dir) {
  fs::create_directories(out_dir);
  path_ = (fs::path(out_dir) / ".lock").string();
  std::ofstream probe(path_, std::ios::out | std::ios::app);
  if (fs::exists(path_) && fs::file_size(path_) > 0)
    throw Error("pipeline: output directory " + out_dir +
                " is locked by another run (remove .lock if stale)");
  std::ofstream lock(path_, std::ios::trunc);
  lock << "pid " << ::getpid() << "\n";
}

PipelineLock::~PipelineLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

nlohmann::json load_json(const std::string& path) {
  return nlohmann::json::parse(read_text(path));
}

void save_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Shared state across stage helpers; loads artifacts lazily.
struct PipelineContext {
  const ExperimentConfig& cfg;
  fs::path out;
  std::string config_hash;
  nlohmann::json timing = nlohmann::json::object();

  std::optional<Corpus> train_corpus, test_corpus;
  std::optional<SplitBundle> bundle;

  PipelineContext(const ExperimentConfig& c, const std::string& out_dir)
      : cfg(c), out(out_dir), config_hash(c.hash()) {}

  fs::path p(const std::string& rel) const { return out / rel; }

  void ensure_dirs() {
    for (const char* d :
         {"data", "splits", "checkpoints", "logs", "eval", "mia", "prune",
          "report"})
      fs::create_directories(out / d);
    const fs::path cfg_path = p("config.used.cfg");
    if (fs::exists(cfg_path)) {
      if (read_text(cfg_path.string()) != cfg.canonical())
        throw ConfigError(
            "pipeline: output directory was produced with a different config "
            "(hash mismatch in " + cfg_path.string() + ")");
    } else {
      write_text(cfg_path.string(), cfg.canonical());
    }
  }

  template <typename F>
  void timed_stage(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw Error("stage " + name + ": " + e.what() + " (artifacts in " +
                  out.string() + ")");
    }
    const auto t1 = std::chrono::steady_clock::now();
    timing[name] = std::chrono::duration<double>(t1 - t0).count();
  }

  int max_transcription_len() const { return cfg.model.max_len; }

  std::vector<std::string> load_lexicon(const std::string& file,
                                        bool test_pool) const {
    if (file.empty())
      return test_pool ? default_test_lexicon() : default_lexicon();
    std::ifstream in(file);
    if (!in) throw Error("cannot open lexicon file " + file);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) words.push_back(line);
    }
    return words;
  }

  // ---- stage: gen-data -------------------------------------------------
  void ensure_data() {
    const fs::path train_dir = p("data/train");
    const fs::path test_dir = p("data/test");
    if (!fs::exists(train_dir / "index.tsv") || !fs::exists(test_dir / "index.tsv")) {
      if (cfg.corpus.kind == "synthetic") {
        SyntheticConfig sc;
        sc.n_writers = cfg.corpus.n_writers;
        sc.words_per_writer = cfg.corpus.words_per_writer;
        sc.lexicon = load_lexicon(cfg.corpus.lexicon_file, false);
        sc.max_width = cfg.corpus.max_width;
        sc.max_transcription_len = max_transcription_len();
        sc.styles = derive_styles(sc.n_writers, cfg.corpus.seed);
        Corpus train = generate_synthetic_corpus(sc, cfg.corpus.seed);

        SyntheticConfig tc = sc;
        tc.words_per_writer = cfg.corpus.test_words_per_writer;
        tc.lexicon = load_lexicon(cfg.corpus.test_lexicon_file, true);
        Corpus test =
            generate_synthetic_corpus(tc, mix_seed(cfg.corpus.seed, 0x7E57u));
        save_corpus(train_dir.string(), train);
        save_corpus(test_dir.string(), test);
      } else {
        // Adapt a licensed IAM tree already converted to the index.tsv
        // layout; copy nothing, just materialize the two partitions.
        LoadResult train = load_iam_format(cfg.corpus.iam_root,
                                           cfg.corpus.iam_train_partition,
                                           cfg.corpus.max_width,
                                           max_transcription_len());
        LoadResult test = load_iam_format(cfg.corpus.iam_root,
                                          cfg.corpus.iam_test_partition,
                                          cfg.corpus.max_width,
                                          max_transcription_len());
        std::cerr << "gen-data: iam ingest dropped " << train.dropped_count
                  << " train / " << test.dropped_count << " test rows\n";
        save_corpus(train_dir.string(), train.corpus);
        save_corpus(test_dir.string(), test.corpus);
      }
    }
    // One load path for fresh and resumed runs alike.
    train_corpus = load_iam_format(train_dir.string(), "", cfg.corpus.max_width,
                                   max_transcription_len()).corpus;
    test_corpus = load_iam_format(test_dir.string(), "", cfg.corpus.max_width,
                                  max_transcription_len()).corpus;
  }

  // ---- stage: split ----------------------------------------------------
  void ensure_split() {
    if (!train_corpus) ensure_data();
    std::vector<int> forget_ids = cfg.split.forget_writers;
    if (forget_ids.empty())
      throw ConfigError("pipeline: split.forget_writers is required");
    bundle = split_by_writers(*train_corpus, *test_corpus, forget_ids);
    const fs::path split_path = p("splits/split.json");
    nlohmann::json j{{"forget_writers", forget_ids},
                     {"n_retain", bundle->retain.samples.size()},
                     {"n_forget", bundle->forget.samples.size()},
                     {"n_test", bundle->test.samples.size()},
                     {"config_hash", config_hash}};
    if (!fs::exists(split_path)) save_json(split_path.string(), j);
  }

  // ---- stage: train ----------------------------------------------------
  ModelState ensure_baseline() {
    const fs::path ckpt = p("checkpoints/baseline.ckpt");
    if (!bundle) ensure_split();
    if (fs::exists(ckpt)) return load_checkpoint(ckpt.string()).model;

    ModelConfig mc = cfg.model_config(train_corpus->n_writers());
    TrainConfig tc = cfg.train_config();
    ModelState model;
    BaselineOptions opts;
    opts.checkpoint_dir = p("checkpoints").string();
    opts.eval.retain = &bundle->retain;
    opts.eval.forget = &bundle->forget;
    opts.eval.test = &bundle->test;

    // Resume from the newest epoch checkpoint when one exists.
    LoadedCheckpoint resumed;
    bool has_resume = false;
    for (int e = tc.epochs; e >= 1; --e) {
      const fs::path part = p("checkpoints/baseline_ep" + std::to_string(e) + ".ckpt");
      if (fs::exists(part)) {
        resumed = load_checkpoint(part.string());
        has_resume = resumed.has_train;
        break;
      }
    }
    if (has_resume) {
      model = std::move(resumed.model);
      opts.resume = &resumed.train;
    } else {
      model = build_model(mc);
    }
    TrainLog log = train_baseline(model, *train_corpus, tc, opts);
    log.config_hash = config_hash;
    log.save_jsonl(p("logs/train_baseline.jsonl").string());
    return model;
  }

  // ---- eval / mia helpers ---------------------------------------------
  nlohmann::json ensure_eval(const std::string& tag, const ModelState& model) {
    const fs::path path = p("eval/" + tag + ".json");
    if (fs::exists(path)) return load_json(path.string());
    if (!bundle) ensure_split();
    const int bs = cfg.train.batch_size;
    const SparsityReport sparsity = sparsity_report(model);
    nlohmann::json j{
        {"stage", tag},
        {"config_hash", config_hash},
        {"sparsity", sparsity.global},
        {"sparsity_per_group", sparsity.per_group},
        {"retain", evaluate_model(model, bundle->retain, bs).to_json()},
        {"forget", evaluate_model(model, bundle->forget, bs).to_json()},
        {"test", evaluate_model(model, bundle->test, bs).to_json()}};
    save_json(path.string(), j);
    return j;
  }

  nlohmann::json ensure_mia(const std::string& tag, const ModelState& model) {
    const fs::path path = p("mia/" + tag + ".json");
    if (fs::exists(path)) return load_json(path.string());
    if (!bundle) ensure_split();
    MIAConfig mc = cfg.mia_config();
    mc.seed = mix_seed(mc.seed, fnv1a64(tag));
    MIADatasetBundle data =
        build_mia_dataset(model, bundle->retain, bundle->test, bundle->forget,
                          mc.seed, cfg.train.batch_size);
    MIAModelState mia = train_mia(data, mc);
    MIAReport report = evaluate_mia(mia, data, mc);
    nlohmann::json j = report.to_json();
    j["stage"] = tag;
    j["config_hash"] = config_hash;
    j["eval_accuracy"] = mia_eval_accuracy(mia, data);
    save_json(path.string(), j);
    return j;
  }

  // ---- stage: prune ----------------------------------------------------
  void ensure_stats(const ModelState& baseline) {
    if (!bundle) ensure_split();
    const fs::path f_path = p("prune/stats_forget.bin");
    const fs::path r_path = p("prune/stats_retain.bin");
    if (!fs::exists(f_path)) {
      save_stats(f_path.string(),
                 collect_activation_stats(baseline, bundle->forget,
                                          LayerSelector::all(),
                                          cfg.prune.batch_size, "forget"));
    }
    if (!fs::exists(r_path)) {
      save_stats(r_path.string(),
                 collect_activation_stats(baseline, bundle->retain,
                                          LayerSelector::all(),
                                          cfg.prune.batch_size, "retain"));
    }
  }

  ModelState ensure_pruned(const ModelState& baseline) {
    const fs::path ckpt = p("checkpoints/pruned.ckpt");
    if (fs::exists(ckpt)) return load_checkpoint(ckpt.string()).model;
    ensure_stats(baseline);
    const ActivationStats f = load_stats(p("prune/stats_forget.bin").string());
    const ActivationStats r = load_stats(p("prune/stats_retain.bin").string());
    const ImportanceScores scores = importance_scores(f, r, cfg.prune.epsilon);
    PlanOptions popts;
    popts.protect_heads = cfg.prune.protect_heads;
    const PruningPlan plan =
        build_pruning_plan(scores, baseline.cfg, cfg.prune.rates, popts);
    save_plan(p("prune/plan.bin").string(), plan);
    ModelState pruned = apply_pruning(baseline, plan);
    save_checkpoint(ckpt.string(), pruned);
    return pruned;
  }

  // ---- stage: unlearn (relabel + RL milestones) -------------------------
  RelabelResult ensure_relabel() {
    if (!bundle) ensure_split();
    const fs::path path = p("splits/relabel.json");
    RelabelResult rl = relabel_forget(bundle->forget,
                                      train_corpus->n_writers(),
                                      cfg.split.seed);
    if (!fs::exists(path)) {
      nlohmann::json entries = nlohmann::json::array();
      for (size_t i = 0; i < rl.corpus.samples.size(); ++i) {
        entries.push_back({{"sample_id", rl.corpus.samples[i].id},
                           {"original", rl.original_writer_ids[i]},
                           {"relabeled", rl.corpus.samples[i].writer_id}});
      }
      save_json(path.string(),
                nlohmann::json{{"config_hash", config_hash},
                               {"entries", std::move(entries)}});
    }
    return rl;
  }

  void ensure_unlearn(const ModelState& pruned) {
    if (!cfg.model.enable_writer_head) {
      std::cerr << "unlearn: skipped; the single-head model has no writer "
                   "head to relabel\n";
      return;
    }
    if (cfg.rl.iterations.empty()) return;
    const RelabelResult rl = ensure_relabel();

    TrainConfig tc = cfg.train_config();
    tc.batch_size = cfg.rl.batch_size > 0 ? cfg.rl.batch_size : tc.batch_size;
    // Stage-II learning rate defaults to the final baseline rate.
    tc.learning_rate =
        cfg.rl.learning_rate > 0.0
            ? cfg.rl.learning_rate
            : cfg.train.learning_rate *
                  std::pow(cfg.train.decay_factor,
                           std::max(0, cfg.train.epochs - 1) / cfg.train.decay_interval);
    tc.seed = mix_seed(cfg.train.seed, 0x8125u);

    // Resume from the last milestone checkpoint that already exists.
    ModelState model = pruned;
    int64_t done = 0;
    const TrainState* resume = nullptr;
    LoadedCheckpoint resumed;
    for (auto it = cfg.rl.iterations.rbegin(); it != cfg.rl.iterations.rend(); ++it) {
      const fs::path ck = p("checkpoints/rl_it" + std::to_string(*it) + ".ckpt");
      if (fs::exists(ck)) {
        resumed = load_checkpoint(ck.string());
        model = std::move(resumed.model);
        resume = resumed.has_train ? &resumed.train : nullptr;
        done = *it;
        break;
      }
    }

    const int64_t total = cfg.rl.iterations.back();
    FinetuneOptions opts;
    opts.allow_regrowth = cfg.rl.allow_regrowth;
    opts.forget_rec_loss = cfg.rl.forget_rec_loss;
    opts.milestones = cfg.rl.iterations;
    opts.resume = resume;
    opts.resume_iteration = done;
    opts.on_milestone = [&](int64_t iter, ModelState& m, const TrainState& ts) {
      save_checkpoint(p("checkpoints/rl_it" + std::to_string(iter) + ".ckpt").string(),
                      m, &ts);
    };
    if (done < total) {
      TrainLog log = finetune_random_label(model, bundle->retain, rl, tc, total, opts);
      log.config_hash = config_hash;
      log.save_jsonl(p("logs/rl.jsonl").string());
    }
    for (int64_t it : cfg.rl.iterations) {
      const std::string tag = "rl_it" + std::to_string(it);
      LoadedCheckpoint at =
          load_checkpoint(p("checkpoints/" + tag + ".ckpt").string());
      ensure_eval(tag, at.model);
      ensure_mia(tag, at.model);
    }
  }
};

}  // namespace

nlohmann::json run_pipeline(const ExperimentConfig& cfg,
                            const std::string& out_dir,
                            const std::string& stop_after) {
  if (!stop_after.empty() &&
      std::find(kPipelineStages.begin(), kPipelineStages.end(), stop_after) ==
          kPipelineStages.end())
    throw ConfigError("run_pipeline: unknown stage " + stop_after);

  PipelineLock lock(out_dir);
  PipelineContext ctx(cfg, out_dir);
  ctx.ensure_dirs();

  ModelState baseline, pruned;
  auto stop = [&](const std::string& stage) { return stage == stop_after; };

  ctx.timed_stage("gen-data", [&] { ctx.ensure_data(); });
  if (stop("gen-data")) return emit_report(cfg, out_dir);
  ctx.timed_stage("split", [&] { ctx.ensure_split(); });
  if (stop("split")) return emit_report(cfg, out_dir);
  ctx.timed_stage("train", [&] { baseline = ctx.ensure_baseline(); });
  if (stop("train")) return emit_report(cfg, out_dir);
  ctx.timed_stage("eval-baseline", [&] { ctx.ensure_eval("baseline", baseline); });
  if (stop("eval-baseline")) return emit_report(cfg, out_dir);
  ctx.timed_stage("mia-baseline", [&] { ctx.ensure_mia("baseline", baseline); });
  if (stop("mia-baseline")) return emit_report(cfg, out_dir);
  ctx.timed_stage("prune", [&] { pruned = ctx.ensure_pruned(baseline); });
  if (stop("prune")) return emit_report(cfg, out_dir);
  ctx.timed_stage("eval-pruned", [&] { ctx.ensure_eval("pruned", pruned); });
  if (stop("eval-pruned")) return emit_report(cfg, out_dir);
  ctx.timed_stage("mia-pruned", [&] { ctx.ensure_mia("pruned", pruned); });
  if (stop("mia-pruned")) return emit_report(cfg, out_dir);
  ctx.timed_stage("unlearn", [&] { ctx.ensure_unlearn(pruned); });

  nlohmann::json report = emit_report(cfg, out_dir);
  report["timing"] = ctx.timing;
  save_json((fs::path(out_dir) / "report/run_report.json").string(), report);
  return report;
}

nlohmann::json sweep_pruning(const ExperimentConfig& cfg,
                             const std::string& out_dir, ModuleGroup group,
                             const std::vector<double>& rates) {
  PipelineLock lock(out_dir);
  PipelineContext ctx(cfg, out_dir);
  ctx.ensure_dirs();
  ctx.ensure_data();
  ctx.ensure_split();
  ModelState baseline = ctx.ensure_baseline();
  ctx.ensure_stats(baseline);
  const ActivationStats f = load_stats(ctx.p("prune/stats_forget.bin").string());
  const ActivationStats r = load_stats(ctx.p("prune/stats_retain.bin").string());
  const ImportanceScores scores = importance_scores(f, r, cfg.prune.epsilon);

  nlohmann::json rows = nlohmann::json::array();
  const int bs = cfg.train.batch_size;
  for (double rate : rates) {
    PlanOptions popts;
    popts.protect_heads = cfg.prune.protect_heads;
    std::map<ModuleGroup, double> one{{group, rate}};
    const PruningPlan plan = build_pruning_plan(scores, baseline.cfg, one, popts);
    const ModelState pruned = apply_pruning(baseline, plan);
    const SparsityReport sr = sparsity_report(pruned);
    rows.push_back(nlohmann::json{
        {"rate", rate},
        {"sparsity", sr.global},
        {"forget", evaluate_model(pruned, ctx.bundle->forget, bs).to_json()},
        {"retain", evaluate_model(pruned, ctx.bundle->retain, bs).to_json()},
        {"test", evaluate_model(pruned, ctx.bundle->test, bs).to_json()}});
  }
  nlohmann::json table{{"group", module_group_name(group)},
                       {"config_hash", ctx.config_hash},
                       {"rows", rows}};
  save_json(ctx.p("report/sweep_" + module_group_name(group) + ".json").string(),
            table);
  return table;
}

nlohmann::json report_comparable(nlohmann::json report) {
  report.erase("timing");
  return report;
}

}  // namespace htru
