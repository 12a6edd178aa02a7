// Command-line front end for the unlearning workbench: data generation,
// baseline training, pruning, random-label fine-tuning, membership
// inference and report emission, all driven by one experiment config.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "htru/checkpoint.hpp"
#include "htru/dataset_io.hpp"
#include "htru/pipeline.hpp"
#include "htru/png_io.hpp"
#include "htru/report.hpp"

namespace fs = std::filesystem;
using namespace htru;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
};

ExperimentConfig load_config(const GlobalArgs& g) {
  if (g.config_path.empty()) throw ConfigError("missing --config");
  ExperimentConfig cfg = ExperimentConfig::parse_file(g.config_path);
  if (!g.out_dir.empty()) cfg.output.dir = g.out_dir;
  if (cfg.output.dir.empty())
    throw ConfigError("no output directory: set [output] dir or pass --out");
  if (g.seed >= 0) {
    // One master seed fans out to the per-section seeds.
    cfg.corpus.seed = static_cast<uint64_t>(g.seed);
    cfg.split.seed = static_cast<uint64_t>(g.seed) + 1;
    cfg.model.seed = static_cast<uint64_t>(g.seed) + 2;
    cfg.train.seed = static_cast<uint64_t>(g.seed) + 3;
    cfg.mia.seed = static_cast<uint64_t>(g.seed) + 4;
  }
  return cfg;
}

void run_to_stage(const GlobalArgs& g, const std::string& stage) {
  const ExperimentConfig cfg = load_config(g);
  run_pipeline(cfg, cfg.output.dir, stage);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage unlearning workbench for handwritten text recognition"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--out/--seed may follow the subcommand

  GlobalArgs g;
  app.add_option("--config", g.config_path, "experiment config file")->required(false);
  app.add_option("--out", g.out_dir, "output directory (overrides [output] dir)");
  app.add_option("--seed", g.seed, "master seed overriding per-section seeds");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate or ingest the dataset");
  auto* cmd_train = app.add_subcommand("train", "train the baseline model");
  std::string resume_ckpt;
  cmd_train->add_option("--resume", resume_ckpt, "resume from a checkpoint (auto-detected by default)");
  int64_t train_iterations = -1;
  cmd_train->add_option("--iterations", train_iterations, "unused for epoch-based baseline; accepted for interface parity");

  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on retain/forget/test");
  std::string eval_ckpt = "baseline";
  cmd_eval->add_option("--checkpoint", eval_ckpt, "baseline | pruned | rl_it<N> | path");

  auto* cmd_prune = app.add_subcommand("prune", "collect stats, build the plan, apply masks");
  std::string prune_rates;
  cmd_prune->add_option("--rates", prune_rates, "e.g. embed=40,attn_shallow=20,attn_middle=40,attn_deep=20,ff=20");
  std::vector<std::string> stats_from;
  cmd_prune->add_option("--stats-from", stats_from, "two dataset dirs (forget retain) to collect stats from")->expected(2);
  bool no_protect = false;
  cmd_prune->add_flag("--no-protect-heads", no_protect, "allow pruning the head projections");

  auto* cmd_sweep = app.add_subcommand("sweep", "per-group pruning-rate sweep");
  std::string sweep_group;
  cmd_sweep->add_option("--group", sweep_group, "embed|attn_shallow|attn_middle|attn_deep|ff|head_writer|head_recognition")->required();
  std::vector<double> sweep_rates;
  cmd_sweep->add_option("--rates", sweep_rates, "rates in percent")->required();

  auto* cmd_unlearn = app.add_subcommand("unlearn", "Stage I + Stage II with milestone evals");
  bool allow_regrowth = false;
  cmd_unlearn->add_flag("--allow-regrowth", allow_regrowth, "let pruned weights regrow during fine-tuning");
  std::string forget_rec_loss;
  cmd_unlearn->add_option("--forget-rec-loss", forget_rec_loss, "on|off: recognition loss on forget samples");
  std::string stop_after;
  cmd_unlearn->add_option("--stop-after", stop_after, "stop after the named stage (resume later)");

  auto* cmd_mia = app.add_subcommand("mia", "membership inference for a checkpoint");
  std::string mia_ckpt = "baseline";
  cmd_mia->add_option("--checkpoint", mia_ckpt, "baseline | pruned | rl_it<N>");

  auto* cmd_report = app.add_subcommand("report", "emit CSV tables and the digest");

  auto* cmd_gradcam = app.add_subcommand("gradcam", "CNN attribution heatmap for one sample");
  std::string gc_ckpt = "baseline";
  int64_t gc_sample = 0;
  std::string gc_target = "writer:0";
  std::string gc_set = "forget";
  std::string gc_png;
  cmd_gradcam->add_option("--checkpoint", gc_ckpt, "checkpoint tag or path");
  cmd_gradcam->add_option("--sample", gc_sample, "sample id within --set");
  cmd_gradcam->add_option("--set", gc_set, "train|test set to look the sample up in");
  cmd_gradcam->add_option("--target", gc_target, "writer:<k> or slot:<s>:<char>");
  cmd_gradcam->add_option("--out-png", gc_png, "write the upsampled heatmap here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(cmd_gen)) {
      run_to_stage(g, "gen-data");
    } else if (app.got_subcommand(cmd_train)) {
      (void)resume_ckpt;  // the pipeline auto-resumes from epoch checkpoints
      run_to_stage(g, "train");
    } else if (app.got_subcommand(cmd_eval)) {
      ExperimentConfig cfg = load_config(g);
      run_pipeline(cfg, cfg.output.dir, eval_ckpt == "baseline" ? "eval-baseline"
                                        : eval_ckpt == "pruned" ? "eval-pruned"
                                                                : "unlearn");
      const fs::path out(cfg.output.dir);
      const std::string tag = eval_ckpt;
      std::ifstream in(out / ("eval/" + tag + ".json"));
      if (in) std::cout << in.rdbuf() << "\n";
    } else if (app.got_subcommand(cmd_prune)) {
      ExperimentConfig cfg = load_config(g);
      if (!prune_rates.empty()) cfg.prune.rates = parse_rates(prune_rates);
      if (no_protect) cfg.prune.protect_heads = false;
      if (!stats_from.empty()) {
        // Alternate stat sources: two dataset dirs in index.tsv layout.
        run_pipeline(cfg, cfg.output.dir, "train");
        LoadedCheckpoint base = load_checkpoint(
            (fs::path(cfg.output.dir) / "checkpoints/baseline.ckpt").string());
        const int ml = cfg.model.max_len;
        Corpus forget = load_iam_format(stats_from[0], "", cfg.corpus.max_width, ml).corpus;
        Corpus retain = load_iam_format(stats_from[1], "", cfg.corpus.max_width, ml).corpus;
        ActivationStats fs_ = collect_activation_stats(
            base.model, forget, LayerSelector::all(), cfg.prune.batch_size, "forget");
        ActivationStats rs = collect_activation_stats(
            base.model, retain, LayerSelector::all(), cfg.prune.batch_size, "retain");
        save_stats((fs::path(cfg.output.dir) / "prune/stats_forget.bin").string(), fs_);
        save_stats((fs::path(cfg.output.dir) / "prune/stats_retain.bin").string(), rs);
      }
      run_pipeline(cfg, cfg.output.dir, "prune");
    } else if (app.got_subcommand(cmd_sweep)) {
      ExperimentConfig cfg = load_config(g);
      const nlohmann::json table =
          sweep_pruning(cfg, cfg.output.dir, module_group_from_name(sweep_group),
                        sweep_rates);
      std::cout << table.dump(2) << "\n";
    } else if (app.got_subcommand(cmd_unlearn)) {
      ExperimentConfig cfg = load_config(g);
      if (allow_regrowth) cfg.rl.allow_regrowth = true;
      if (!forget_rec_loss.empty()) {
        if (forget_rec_loss != "on" && forget_rec_loss != "off")
          throw ConfigError("--forget-rec-loss must be on or off");
        cfg.rl.forget_rec_loss = forget_rec_loss == "on";
      }
      run_pipeline(cfg, cfg.output.dir, stop_after.empty() ? "unlearn" : stop_after);
    } else if (app.got_subcommand(cmd_mia)) {
      run_to_stage(g, mia_ckpt == "baseline" ? "mia-baseline"
                      : mia_ckpt == "pruned" ? "mia-pruned"
                                             : "unlearn");
    } else if (app.got_subcommand(cmd_report)) {
      ExperimentConfig cfg = load_config(g);
      const nlohmann::json report = run_pipeline(cfg, cfg.output.dir);
      std::cout << "report written to " << cfg.output.dir << "/report\n";
      (void)report;
    } else if (app.got_subcommand(cmd_gradcam)) {
      ExperimentConfig cfg = load_config(g);
      run_pipeline(cfg, cfg.output.dir, "train");
      const fs::path out(cfg.output.dir);
      const std::string ckpt_path =
          fs::exists(gc_ckpt) ? gc_ckpt
                              : (out / ("checkpoints/" + gc_ckpt + ".ckpt")).string();
      LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
      const std::string data_dir =
          (out / (gc_set == "test" ? "data/test" : "data/train")).string();
      Corpus corpus =
          load_iam_format(data_dir, "", cfg.corpus.max_width, cfg.model.max_len).corpus;
      const Sample* sample = nullptr;
      for (const auto& s : corpus.samples)
        if (s.id == gc_sample) sample = &s;
      if (sample == nullptr)
        throw Error("gradcam: no sample with id " + std::to_string(gc_sample));

      GradCamTarget target;
      if (gc_target.rfind("writer:", 0) == 0) {
        target.kind = GradCamTarget::Kind::writer_class;
        target.writer_class = std::stoi(gc_target.substr(7));
      } else if (gc_target.rfind("slot:", 0) == 0) {
        target.kind = GradCamTarget::Kind::recognition_slot;
        const std::string rest = gc_target.substr(5);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
          throw ConfigError("gradcam: --target slot:<s>:<char>");
        target.slot = std::stoi(rest.substr(0, colon));
        const std::string ch = rest.substr(colon + 1);
        target.char_class = ch == "pad" ? Alphabet::kPadIndex
                                        : corpus.alphabet.index_of(ch.at(0));
        if (target.char_class < 0)
          throw ConfigError("gradcam: bad character " + ch);
      } else {
        throw ConfigError("gradcam: --target writer:<k> or slot:<s>:<char>");
      }

      const GradCamResult result = gradcam(ckpt.model, sample->image, target);
      if (!gc_png.empty()) {
        GrayImage vis(64, sample->image.width);
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < sample->image.width; ++x)
            vis.at(y, x) = static_cast<uint8_t>(255.0 -
                255.0 * result.upsampled.data[(size_t)y * sample->image.width + x]);
        write_png_gray(gc_png, vis);
        std::cout << "heatmap written to " << gc_png << "\n";
      } else {
        double peak = 0.0;
        for (double v : result.heatmap.data) peak = std::max(peak, v);
        std::cout << "heatmap grid " << result.heatmap.shape[0] << "x"
                  << result.heatmap.shape[1] << ", peak " << peak << "\n";
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  (void)train_iterations;
  return kExitOk;
}
