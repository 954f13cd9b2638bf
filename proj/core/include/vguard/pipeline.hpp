#pragma once

#include <filesystem>
#include <optional>

#include "vguard/config.hpp"
#include "vguard/eval.hpp"

namespace vguard {

// Fixed artifact layout under a run's output directory.
struct RunPaths {
  std::filesystem::path out;

  std::filesystem::path corpus_dir() const { return out / "corpus"; }
  std::filesystem::path corpus_manifest() const { return corpus_dir() / "manifest.json"; }
  std::filesystem::path attacked_dir() const { return out / "attacked"; }
  std::filesystem::path attacked_manifest() const { return attacked_dir() / "manifest.json"; }
  std::filesystem::path ground_truth() const { return out / "ground_truth.json"; }
  std::filesystem::path detection() const { return out / "detection.json"; }
  std::filesystem::path feature_csv() const { return out / "detection_features.csv"; }
  std::filesystem::path embeddings_dir() const { return out / "embeddings"; }
  std::filesystem::path checkpoint() const { return out / "checkpoint.json"; }
  std::filesystem::path fold_metrics() const { return out / "fold_metrics.json"; }
  std::filesystem::path metrics() const { return out / "metrics.json"; }
  std::filesystem::path metrics_text() const { return out / "metrics.txt"; }
  std::filesystem::path confusion_csv() const { return out / "confusion.csv"; }
  std::filesystem::path timing() const { return out / "timing.json"; }
  std::filesystem::path config_echo() const { return out / "config.json"; }
  std::filesystem::path status_dir() const { return out / "status"; }
};

struct StageContext {
  PipelineConfig cfg;
  RunPaths paths;
  bool force = false;
  bool quiet = false;
  // Alternate input corpus (ingested instead of synthesized, or a staged
  // corpus produced elsewhere).
  std::optional<std::filesystem::path> corpus_dir_override;
  std::optional<std::filesystem::path> attacked_dir_override;
};

// Each stage is a no-op when its status fingerprint matches the current
// config and inputs, unless force is set.  Every stage records its wall
// clock in timing.json.
void run_synth(StageContext& ctx);
void run_attack(StageContext& ctx);
void run_detect(StageContext& ctx);
void run_embed(StageContext& ctx);
void run_train(StageContext& ctx);
void run_eval(StageContext& ctx);

// Steps 1-8 end to end; returns the final report.
EvalReport run_pipeline(StageContext& ctx);

StageTimings read_timings(const std::filesystem::path& timing_json);

}  // namespace vguard
