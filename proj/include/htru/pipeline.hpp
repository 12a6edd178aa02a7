#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "htru/config.hpp"

namespace htru {

// Stage names in execution order. `unlearn` covers relabeling plus the
// random-label fine-tune with per-milestone eval + MIA.
extern const std::vector<std::string> kPipelineStages;
// {"gen-data","split","train","eval-baseline","mia-baseline","prune",
//  "eval-pruned","mia-pruned","unlearn","report"}

// Runs (or resumes) the pipeline inside out_dir. Every stage persists its
// artifacts and is skipped when they already exist for this config hash.
// stop_after, when set, ends the run after that stage (used to exercise
// kill/resume behaviour). Returns the run report (partial when stopped).
nlohmann::json run_pipeline(const ExperimentConfig& cfg,
                            const std::string& out_dir,
                            const std::string& stop_after = "");

// One row per rate: sparsity plus the three-set metrics table. Requires the
// baseline checkpoint and activation stats (built on demand).
nlohmann::json sweep_pruning(const ExperimentConfig& cfg,
                             const std::string& out_dir,
                             ModuleGroup group,
                             const std::vector<double>& rates);

// Emit report/*.csv and report/digest.md from whatever stage artifacts
// exist; returns the run report json.
nlohmann::json emit_report(const ExperimentConfig& cfg,
                           const std::string& out_dir);

// Strips volatile fields (timing) so two runs can be compared for identity.
nlohmann::json report_comparable(nlohmann::json report);

// Exclusive ownership of an output directory via a lock file.
class PipelineLock {
 public:
  explicit PipelineLock(const std::string& out_dir);
  ~PipelineLock();
  PipelineLock(const PipelineLock&) = delete;
  PipelineLock& operator=(const PipelineLock&) = delete;

 private:
  std::string path_;
};

}  // namespace htru
