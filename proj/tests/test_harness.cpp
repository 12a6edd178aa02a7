#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "htru/pipeline.hpp"
#include "htru/report.hpp"

using namespace htru;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"cfg(
[corpus]
kind = synthetic
n_writers = 3
words_per_writer = 18
test_words_per_writer = 8
max_width = 256
seed = 7

[split]
forget_writers = 2
seed = 11

[model]
cnn_channels = 4,8
d_model = 16
n_blocks = 2
n_heads = 2
ff_dim = 24
max_len = 8
enable_writer_head = true
seed = 21

[train]
batch_size = 8
learning_rate = 0.002
decay_factor = 0.1
decay_interval = 10
epochs = 6
eval_interval = 3
seed = 31

[prune]
rates = embed=25,attn_shallow=20,attn_middle=40,attn_deep=20,ff=20
epsilon = 1e-8
batch_size = 8

[rl]
iterations = 6,14
batch_size = 8

[mia]
epochs = 40
hidden = 64,16
seed = 41
)cfg";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing is strict and canonical") {
  const ExperimentConfig cfg = ExperimentConfig::parse_string(kTinyConfig);
  CHECK(cfg.corpus.n_writers == 3);
  CHECK(cfg.rl.iterations == std::vector<int64_t>{6, 14});
  CHECK(cfg.prune.rates.at(ModuleGroup::embedding) == 25.0);
  CHECK(cfg.mia.hidden == std::vector<int>{64, 16});

  // canonical round trip preserves the hash
  const ExperimentConfig again = ExperimentConfig::parse_string(cfg.canonical());
  CHECK(again.hash() == cfg.hash());

  CHECK_THROWS_AS(ExperimentConfig::parse_string("[corpus]\nbogus_key = 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_string("[nonsense]\nx = 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_string("[train]\nepochs = nan3\n"),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::parse_string("[prune]\nrates = embed:40\n"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_string("key_without_section = 1\n"),
                  ConfigError);
}

TEST_CASE("csv round trip") {
  const fs::path dir = fresh_dir("htru_csv_test");
  fs::create_directories(dir);
  CsvTable table;
  table.header = {"stage", "value", "note"};
  table.rows = {{"baseline", "1.00", ""}, {"pruned", "17.45", "x"}};
  const std::string path = (dir / "t.csv").string();
  write_csv(path, table);
  const CsvTable parsed = parse_csv(path);
  CHECK(parsed.header == table.header);
  REQUIRE(parsed.rows.size() == table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) CHECK(parsed.rows[i] == table.rows[i]);
  fs::remove_all(dir);
}

TEST_CASE("tiny pipeline end to end, determinism, and resume") {
  const ExperimentConfig cfg = ExperimentConfig::parse_string(kTinyConfig);

  const fs::path dir_a = fresh_dir("htru_pipe_a");
  const nlohmann::json report_a = run_pipeline(cfg, dir_a.string());

  // all stage artifacts exist
  for (const char* rel :
       {"checkpoints/baseline.ckpt", "checkpoints/pruned.ckpt",
        "checkpoints/rl_it6.ckpt", "checkpoints/rl_it14.ckpt",
        "eval/baseline.json", "eval/pruned.json", "eval/rl_it14.json",
        "mia/baseline.json", "mia/rl_it14.json", "report/recognition.csv",
        "report/mia.csv", "report/digest.md", "report/run_report.json",
        "splits/relabel.json"})
    CHECK(fs::exists(dir_a / rel));

  // identical fresh run in another directory gives an identical report
  const fs::path dir_b = fresh_dir("htru_pipe_b");
  const nlohmann::json report_b = run_pipeline(cfg, dir_b.string());
  CHECK(report_comparable(report_a).dump() == report_comparable(report_b).dump());

  // kill after the prune stage, resume, and match the uninterrupted run
  const fs::path dir_c = fresh_dir("htru_pipe_c");
  run_pipeline(cfg, dir_c.string(), "prune");
  CHECK(fs::exists(dir_c / "checkpoints/pruned.ckpt"));
  CHECK_FALSE(fs::exists(dir_c / "checkpoints/rl_it14.ckpt"));
  const nlohmann::json report_c = run_pipeline(cfg, dir_c.string());
  CHECK(report_comparable(report_a).dump() == report_comparable(report_c).dump());

  // CSV re-parse equals the in-memory table values
  const CsvTable rec = parse_csv((dir_a / "report/recognition.csv").string());
  REQUIRE(rec.rows.size() >= 4);  // baseline, pruned, two milestones
  const nlohmann::json eval_baseline = report_a["stages"]["baseline"]["eval"];
  CHECK(rec.rows[0][0] == "baseline");
  CHECK(rec.rows[0][4] ==
        format_fixed(eval_baseline["forget"]["cer"].get<double>(), 2));
  CHECK(rec.rows[0][8] ==
        format_fixed(eval_baseline["retain"]["wer"].get<double>(), 2));

  // rerunning on the same directory with a different config is rejected
  ExperimentConfig other = cfg;
  other.train.epochs = 7;
  CHECK_THROWS_AS(run_pipeline(other, dir_a.string()), ConfigError);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove_all(dir_c);
}

TEST_CASE("single-head pipeline runs through MIA and skips stage II") {
  ExperimentConfig cfg = ExperimentConfig::parse_string(kTinyConfig);
  cfg.model.enable_writer_head = false;
  const fs::path dir = fresh_dir("htru_pipe_single");
  const nlohmann::json report = run_pipeline(cfg, dir.string());
  CHECK(fs::exists(dir / "mia/baseline.json"));
  CHECK(fs::exists(dir / "mia/pruned.json"));
  CHECK_FALSE(fs::exists(dir / "checkpoints/rl_it14.ckpt"));
  CHECK(report["stages"].contains("baseline"));
  CHECK(report["stages"].contains("pruned"));
  CHECK_FALSE(report["stages"].contains("rl_it14"));
  // no writer-accuracy cells in the single-head table
  const CsvTable rec = parse_csv((dir / "report/recognition.csv").string());
  CHECK(rec.rows[0][3] == "");
  fs::remove_all(dir);
}

TEST_CASE("sweep: zero rate equals baseline, sparsity is monotone") {
  const ExperimentConfig cfg = ExperimentConfig::parse_string(kTinyConfig);
  const fs::path dir = fresh_dir("htru_sweep");
  {
    // build the prerequisites once
    run_pipeline(cfg, dir.string(), "eval-baseline");
  }
  const nlohmann::json table = sweep_pruning(
      cfg, dir.string(), ModuleGroup::feed_forward, {0.0, 10.0, 30.0});
  const auto& rows = table["rows"];
  REQUIRE(rows.size() == 3);

  std::ifstream in(dir / "eval/baseline.json");
  nlohmann::json baseline;
  in >> baseline;
  CHECK(rows[0]["sparsity"].get<double>() == 0.0);
  CHECK(rows[0]["forget"]["cer"].get<double>() ==
        baseline["forget"]["cer"].get<double>());
  CHECK(rows[0]["retain"]["acc"].get<double>() ==
        baseline["retain"]["acc"].get<double>());

  CHECK(rows[0]["sparsity"].get<double>() <= rows[1]["sparsity"].get<double>());
  CHECK(rows[1]["sparsity"].get<double>() <= rows[2]["sparsity"].get<double>());
  CHECK(fs::exists(dir / "report/sweep_ff.json"));
  fs::remove_all(dir);
}

TEST_CASE("lock file enforces one pipeline per output directory") {
  const fs::path dir = fresh_dir("htru_lock");
  fs::create_directories(dir);
  {
    std::ofstream lock(dir / ".lock");
    lock << "pid 12345\n";
  }
  const ExperimentConfig cfg = ExperimentConfig::parse_string(kTinyConfig);
  CHECK_THROWS_AS(run_pipeline(cfg, dir.string()), Error);
  fs::remove_all(dir);
}
