#include <filesystem>
#include <fstream>
#include <sstream>

#include "htru/checkpoint.hpp"
#include "htru/pipeline.hpp"
#include "htru/report.hpp"

namespace fs = std::filesystem;

namespace htru {

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("write_csv: cannot open " + path);
  auto emit_row = [&](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  emit_row(table.header);
  for (const auto& row : table.rows) emit_row(row);
}

CsvTable parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("parse_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (ss.eof() && !line.empty() && line.back() == ',') row.push_back("");
    if (first) {
      table.header = std::move(row);
      first = false;
    } else {
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string metric_cell(double value) {
  if (value < 0.0) return "";
  return format_fixed(value, 2);
}

namespace {

nlohmann::json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("emit_report: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

std::string ckpt_name_for(const std::string& tag) {
  if (tag == "baseline") return "checkpoints/baseline.ckpt";
  if (tag == "pruned") return "checkpoints/pruned.ckpt";
  return "checkpoints/" + tag + ".ckpt";
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + (c.empty() ? std::string("-") : c) + " |";
  return out + "\n";
}

}  // namespace

nlohmann::json emit_report(const ExperimentConfig& cfg,
                           const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out / "report");

  // Stage order: baseline, pruned, then the RL milestones.
  std::vector<std::string> tags;
  for (const std::string base : {"baseline", "pruned"}) {
    if (fs::exists(out / ("eval/" + base + ".json"))) tags.push_back(base);
  }
  for (int64_t it : cfg.rl.iterations) {
    const std::string tag = "rl_it" + std::to_string(it);
    if (fs::exists(out / ("eval/" + tag + ".json"))) tags.push_back(tag);
  }

  nlohmann::json report;
  report["config_hash"] = cfg.hash();
  report["stages"] = nlohmann::json::object();

  CsvTable rec;
  rec.header = {"stage",      "checkpoint", "sparsity",  "forget_acc",
                "forget_cer", "forget_wer", "retain_acc", "retain_cer",
                "retain_wer", "test_cer",   "test_wer"};
  CsvTable mia;
  mia.header = {"stage",       "checkpoint",  "forget_seen", "forget_unseen",
                "retain_seen", "retain_unseen", "test_seen", "test_unseen"};

  for (const std::string& tag : tags) {
    nlohmann::json stage;
    const nlohmann::json eval = load_json_file(out / ("eval/" + tag + ".json"));
    stage["eval"] = eval;
    std::string ckpt_hash;
    const fs::path ckpt = out / ckpt_name_for(tag);
    if (fs::exists(ckpt)) ckpt_hash = file_hash(ckpt.string());
    stage["checkpoint_hash"] = ckpt_hash;

    auto acc_of = [](const nlohmann::json& set) {
      return set.contains("acc") ? set["acc"].get<double>() : -1.0;
    };
    rec.rows.push_back(
        {tag, ckpt_hash,
         format_fixed(100.0 * eval["sparsity"].get<double>(), 2),
         metric_cell(acc_of(eval["forget"])),
         metric_cell(eval["forget"]["cer"].get<double>()),
         metric_cell(eval["forget"]["wer"].get<double>()),
         metric_cell(acc_of(eval["retain"])),
         metric_cell(eval["retain"]["cer"].get<double>()),
         metric_cell(eval["retain"]["wer"].get<double>()),
         metric_cell(eval["test"]["cer"].get<double>()),
         metric_cell(eval["test"]["wer"].get<double>())});

    const fs::path mia_path = out / ("mia/" + tag + ".json");
    if (fs::exists(mia_path)) {
      const nlohmann::json m = load_json_file(mia_path);
      stage["mia"] = m;
      auto cell = [&](const char* set, const char* field) -> std::string {
        if (!m.contains(set)) return "";
        return format_fixed(m[set][field].get<double>(), 2);
      };
      mia.rows.push_back({tag, ckpt_hash, cell("forget", "seen"),
                          cell("forget", "unseen"), cell("retain_eval", "seen"),
                          cell("retain_eval", "unseen"), cell("test_eval", "seen"),
                          cell("test_eval", "unseen")});
    }
    report["stages"][tag] = std::move(stage);
  }

  write_csv((out / "report/recognition.csv").string(), rec);
  write_csv((out / "report/mia.csv").string(), mia);

  // Human-readable digest.
  std::ofstream md(out / "report/digest.md");
  md << "# Run digest\n\nconfig hash: `" << cfg.hash() << "`\n\n";
  md << "forget writers:";
  for (int w : cfg.split.forget_writers) md << " " << w;
  md << " (" << cfg.split.forget_writers.size() << " of "
     << cfg.corpus.n_writers << " writers in the forget set)\n\n";
  md << "## Recognition and writer identification\n\n";
  md << md_row(rec.header);
  md << md_row(std::vector<std::string>(rec.header.size(), "---"));
  for (const auto& row : rec.rows) md << md_row(row);
  md << "\n## Membership inference\n\n";
  if (!mia.rows.empty()) {
    md << md_row(mia.header);
    md << md_row(std::vector<std::string>(mia.header.size(), "---"));
    for (const auto& row : mia.rows) md << md_row(row);
  } else {
    md << "(no membership-inference artifacts yet)\n";
  }
  md << "\nModel: d_model " << cfg.model.d_model << ", " << cfg.model.n_blocks
     << " blocks, " << cfg.model.n_heads << " heads, max_len "
     << cfg.model.max_len << ".\n";
  return report;
}

}  // namespace htru
