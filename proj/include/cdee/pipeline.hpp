#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdee/classifier.hpp"
#include "cdee/color_balance.hpp"
#include "cdee/config.hpp"
#include "cdee/patch_filter.hpp"
#include "cdee/report.hpp"
#include "cdee/synthetic.hpp"

namespace cdee {

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause),
        stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// ---- individual stages, shared by the CLI subcommands and the pipeline ----

struct PatchStageResult {
  std::vector<PatchRecord> records;
  std::size_t slides = 0;
};

// Tiles every slide listed in `slide_dir`/slides.csv into `patch_dir` and
// writes the manifest with a slide-level train/test split.
PatchStageResult run_patch_stage(const std::filesystem::path& slide_dir,
                                 std::size_t patch_size,
                                 const std::filesystem::path& patch_dir,
                                 const std::filesystem::path& manifest_path,
                                 double test_fraction, std::uint64_t seed);

struct ClusterStageResult {
  std::vector<PatchRecord> records;
  FilterResult filter;
};

// Fills the cluster column of the manifest.
ClusterStageResult run_cluster_stage(const std::filesystem::path& patch_dir,
                                     const std::filesystem::path& manifest_path,
                                     const FilterConfig& config);

// Per-class useful / not-useful counts with percentages, one row per class
// plus a total row.
std::string format_cluster_summary(const std::vector<PatchRecord>& records);

// Writes `out_dir`/pct_<p>/<name> for each percentage and each listed image.
void run_balance_stage(const std::filesystem::path& in_dir,
                       const std::vector<std::string>& names,
                       std::span<const double> percentages,
                       const std::filesystem::path& out_dir,
                       const BalanceOptions& options = {});

// `root` itself, or its pct_* subdirectories when it has any (sorted).
std::vector<std::filesystem::path> patch_roots(const std::filesystem::path& root);

// Records eligible for a split: matching split and not in the not-useful
// cluster.
std::vector<PatchRecord> select_records(const std::vector<PatchRecord>& records,
                                        Split split);

std::vector<LabeledImage> load_labeled(
    const std::vector<std::filesystem::path>& roots,
    const std::vector<PatchRecord>& records);

struct TrainStageResult {
  TrainResult train;
  std::size_t samples = 0;
};

TrainStageResult run_train_stage(const std::vector<std::filesystem::path>& roots,
                                 const std::vector<PatchRecord>& records,
                                 const TrainConfig& config,
                                 const std::filesystem::path& checkpoint_path,
                                 const std::filesystem::path& history_path);

Evaluation run_eval_stage(const std::filesystem::path& checkpoint_path,
                          const std::vector<std::filesystem::path>& roots,
                          const std::vector<PatchRecord>& records,
                          const std::filesystem::path& out_dir);

TrainConfig train_config_from(const KeyValueConfig& cfg,
                              const std::string& prefix = "");

// ---- whole pipeline ----

struct PipelineConfig {
  std::filesystem::path work_dir;
  std::filesystem::path slide_dir;  // empty: generate a synthetic corpus
  std::uint64_t seed = 0;
  SyntheticSpec synthetic;
  std::size_t patch_size = 64;
  double test_fraction = 0.25;
  AutoencoderConfig autoencoder;
  std::vector<double> train_percentages = kTrainSweep;
  std::vector<double> test_percentages = kTestSweep;
  TrainConfig train;

  static PipelineConfig from(const KeyValueConfig& cfg);
  // Stage-relevant settings in canonical text form.
  KeyValueConfig canonical() const;
};

struct PipelineResult {
  std::vector<std::string> ran;      // stages executed, in order
  std::vector<std::string> skipped;  // stages whose outputs were current
  std::filesystem::path summary_path;
};

// synth (when no slide_dir) -> patch -> cluster -> balance -> train -> eval.
// A stage is skipped when its outputs exist, its stamp matches the current
// settings and no upstream stage ran. Throws StageError on failure.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

}  // namespace cdee
